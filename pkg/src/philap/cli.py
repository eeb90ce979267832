"""Command-line front end.

Exit codes: 0 when every check passes, 2 when a verification fails, 1 on
errors (bad flags, unreadable inputs, solver failure).  Reports are written
atomically; flags override ``--config`` values, which override defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import degiorgi as dg
from .errors import ConfigError, PhiLapError
from .fields import (Ball, SpaceTimeField, UniformGrid, atomic_write, gradient, load_field,
                     save_field)
from .nfunction import delta2_estimate, parse_nfunction, psi_props, shifted_props, _parse_kv
from .solvers import PRESETS, SolveConfig, preset, solve_elliptic, solve_parabolic
from .tensor_maps import RELATIONS, equivalence_scan

DEFAULTS = {
    "phi": "power:2",
    "seed": 0,
    "grid": "64x64",
    "domain": None,
    "bc": "quadratic",
    "tol": 1e-10,
    "max_iters": 20000,
    "tau": None,
    "steps": 64,
    "horizon": 0.04,
    "which": "all",
    "trials": 10000,
    "dims": "3x3",
    "magnitude": "1e-3,1e3",
    "mode": "elliptic",
    "gamma_inf": "sup",
    "k_max": 6,
    "alpha": 1.0,
    "exponent_e": None,
    "radius": None,
    "format": None,           # csv for equivalence-scan, json elsewhere
    "levels": 10,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common(p):
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("--phi", help="power:P, powerlog, tabulated:FILE or a config path")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=["csv", "json"])


def build_parser():
    ap = _Parser(prog="philap", description="N-function calculus, phi-Laplacian solvers "
                 "and De Giorgi bound checks")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("nfun-report", help="Delta2 constant, assumption band, shift and psi bands")
    _common(p)
    p.add_argument("--t-lo", type=float, default=1e-6)
    p.add_argument("--t-hi", type=float, default=1e6)
    p.add_argument("--samples", type=int, default=1024)

    p = sub.add_parser("equivalence-scan", help="random scan of the A/V/shift equivalences")
    _common(p)
    p.add_argument("--which", help=f"comma list from {','.join(RELATIONS)} or 'all'")
    p.add_argument("--trials", type=int)
    p.add_argument("--dims", help="NxM")
    p.add_argument("--magnitude", help="lo,hi of the log-uniform scale")

    for name, hlp in (("solve-elliptic", "minimize the discrete phi-energy"),
                      ("solve-parabolic", "implicit Euler for u_t = div A(grad u)")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--grid", help="NxN intervals (NxNxN in 3d)")
        p.add_argument("--domain", help="lo,hi of the cube (default -1,1 elliptic, 0,1 parabolic)")
        p.add_argument("--bc", help=f"preset ({', '.join(sorted(PRESETS))}"
                       + (", sine" if name == "solve-parabolic" else "") + ") or a field file")
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--report", help="JSON report path")
        if name == "solve-parabolic":
            p.add_argument("--tau", type=float)
            p.add_argument("--steps", type=int)
            p.add_argument("--horizon", type=float, help="final time when --tau is absent")

    p = sub.add_parser("verify-degiorgi", help="W_k sequences and the headline bound ratio")
    _common(p)
    p.add_argument("--field", required=True)
    p.add_argument("--mode", choices=["elliptic", "parabolic"])
    p.add_argument("--gamma-inf", help="'auto', 'sup' or a value")
    p.add_argument("--k-max", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--exponent-e", type=float)
    p.add_argument("--radius", type=float, help="ball radius / spatial cylinder radius")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--csv", help="CSV of k, W_k, Y_k, Z_k, C_k")

    p = sub.add_parser("energy-check", help="elliptic energy inequality over a level sweep")
    _common(p)
    p.add_argument("--field", required=True)
    p.add_argument("--radius", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--report", help="JSON report path")
    return ap


def _settings(args):
    """Merge flags over config file values over defaults."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        for k, v in _parse_kv(path.read_text()).items():
            merged[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if v is not None and k != "config":
            merged[k] = v
    return merged


def _dims(text, count=None):
    parts = [int(x) for x in str(text).lower().split("x")]
    if count is not None and len(parts) != count:
        raise ConfigError(f"expected {count} sizes in {text!r}")
    return parts


def _pair(text):
    a, b = (float(x) for x in str(text).split(","))
    return a, b


def _emit(text, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _clean(x):
    """JSON has no NaN or infinity; map them to null."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating,)):
        return _clean(float(x))
    return x


def cmd_nfun_report(s, args):
    nf = parse_nfunction(s["phi"])
    d2 = delta2_estimate(nf, args.t_lo, args.t_hi, args.samples)
    sh = shifted_props(nf)
    ps = psi_props(nf)
    rep = {
        "seed": int(s["seed"]),
        "phi": str(nf),
        "delta2_constant": d2.constant,
        "assumption_band": list(d2.assumption_band),
        "grid": [d2.grid_min, d2.grid_max, d2.samples],
        "shifted_delta2_sup": sh.delta2_sup,
        "shifted_delta2_by_lambda": dict(zip(map(str, sh.lambdas), sh.delta2_by_lambda)),
        "shift_exponent_eps": sh.eps,
        "k2_band": list(sh.k2_band),
        "psi_index_band": list(ps.index_band),
        "psi_sqrt_band": list(ps.sqrt_band),
    }
    if s["format"] == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k in sorted(rep):
            w.writerow([k, json.dumps(_clean(rep[k]))])
        _emit(buf.getvalue(), s.get("out"))
    else:
        _emit(_json(_clean(rep)), s.get("out"))
    return 0


def cmd_equivalence_scan(s, args):
    nf = parse_nfunction(s["phi"])
    which = list(RELATIONS) if s["which"] == "all" else [w.strip() for w in str(s["which"]).split(",")]
    n, m = _dims(s["dims"], 2)
    mag = _pair(s["magnitude"])
    seed = int(s["seed"])
    rows = []
    ok = True
    for w in which:
        b = equivalence_scan(nf, w, int(s["trials"]), (n, m), mag, seed)
        ok &= b.ok()
        rows.append([b.which, str(nf), n, m, int(s["trials"]), repr(b.lo), repr(b.hi), seed])
    if s["format"] == "json":
        keys = ["which", "nf", "n", "m", "trials", "lo", "hi", "seed"]
        _emit(_json([dict(zip(keys, r)) for r in rows]), s.get("out"))
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["which", "nf", "n", "m", "trials", "lo", "hi", "seed"])
        w.writerows(rows)
        _emit(buf.getvalue(), s.get("out"))
    return 0 if ok else 2


def _grid(s, parabolic):
    dims = _dims(s["grid"])
    if len(set(dims)) != 1:
        raise ConfigError("grids are cubes: use NxN or NxNxN")
    lo, hi = _pair(s["domain"]) if s["domain"] else ((0.0, 1.0) if parabolic else (-1.0, 1.0))
    return UniformGrid.box(dims[0], lo, hi, len(dims))


def _boundary(s, grid, parabolic):
    bc = str(s["bc"])
    if Path(bc).is_file():
        f = load_field(bc)
        if isinstance(f, SpaceTimeField):
            f = f.frame(f.frames - 1)
        if f.grid != grid:
            raise ConfigError("boundary field grid differs from --grid/--domain")
        return f.values
    if parabolic and bc == "sine":
        return lambda x: np.prod(np.sin(np.pi * (x - grid.origin[0])
                                        / (grid.h * (grid.shape[0] - 1))), axis=-1)
    return preset(bc)


def _cfg(s):
    return SolveConfig(tol_residual=float(s["tol"]), max_iters=int(s["max_iters"]))


def cmd_solve_elliptic(s, args):
    nf = parse_nfunction(s["phi"])
    grid = _grid(s, False)
    u, rep = solve_elliptic(nf, grid, _boundary(s, grid, False), _cfg(s))
    if s.get("out"):
        save_field(s["out"], u)
    d = rep.as_dict()
    d.update(seed=int(s["seed"]), phi=str(nf), grid=list(grid.shape), h=grid.h)
    text = _json(_clean(d))
    if s.get("report"):
        atomic_write(s["report"], text)
    elif not s.get("out"):
        sys.stdout.write(text)
    return 0


def cmd_solve_parabolic(s, args):
    nf = parse_nfunction(s["phi"])
    grid = _grid(s, True)
    steps = int(s["steps"])
    tau = float(s["tau"]) if s["tau"] is not None else float(s["horizon"]) / steps
    init = _as_values(_boundary(s, grid, True), grid)
    st, rep = solve_parabolic(nf, grid, init, None, tau, steps, _cfg(s))
    if s.get("out"):
        save_field(s["out"], st)
    d = rep.as_dict()
    d.update(seed=int(s["seed"]), phi=str(nf), grid=list(grid.shape), h=grid.h, tau=tau, steps=steps)
    text = _json(_clean(d))
    if s.get("report"):
        atomic_write(s["report"], text)
    elif not s.get("out"):
        sys.stdout.write(text)
    return 0


def _as_values(b, grid):
    return b(grid.coords()) if callable(b) else b


def _center_and_width(grid):
    lo = np.asarray(grid.origin)
    width = grid.h * (grid.shape[0] - 1)
    return tuple(lo + 0.5 * width), width


def cmd_verify_degiorgi(s, args):
    nf = parse_nfunction(s["phi"])
    fld = load_field(s["field"])
    k_max = int(s["k_max"])
    alpha = float(s["alpha"])
    e = None if s["exponent_e"] is None else float(s["exponent_e"])
    g_text = str(s["gamma_inf"])
    gamma = None if g_text in ("sup", "auto") else float(g_text)
    cfg = dg.IterationConfig(gamma_inf=gamma, k_max=k_max, alpha=alpha, exponent_e=e)
    out = {"seed": int(s["seed"]), "phi": str(nf), "mode": s["mode"], "field": str(s["field"])}
    if s["mode"] == "elliptic":
        if isinstance(fld, SpaceTimeField):
            fld = fld.frame(fld.frames - 1)
        center, width = _center_and_width(fld.grid)
        R = float(s["radius"]) if s["radius"] is not None else 0.2 * width
        ball = Ball(center, R)
        if g_text == "auto":
            cfg = dg.IterationConfig(gamma_inf=dg.auto_gamma(nf, fld, ball, cfg), k_max=k_max,
                                     alpha=alpha, exponent_e=e)
        rep = dg.elliptic_wk(nf, fld, ball, cfg)
        rep.bound_ratio = dg.verify_elliptic_bound(nf, fld, ball)
        passed = rep.passed and math.isfinite(rep.bound_ratio)
        out.update(ball={"center": list(center), "radius": R})
    else:
        if not isinstance(fld, SpaceTimeField):
            raise ConfigError("parabolic mode needs a space-time field")
        if g_text == "auto":
            raise ConfigError("--gamma-inf auto is available in elliptic mode only")
        center, width = _center_and_width(fld.grid)
        R = float(s["radius"]) if s["radius"] is not None else 0.1 * width
        t = fld.times
        cyl = dg.parabolic_cylinder(center, R, 0.5 * (t[0] + t[-1]), alpha)
        rep = dg.parabolic_sequences(nf, fld, cyl, cfg)
        ratios = {}
        n = fld.grid.n
        for label, ee in (("(2-n)/2", (2 - n) / 2), ("(2-n)/n", (2 - n) / n)):
            ratios[label] = dg.verify_parabolic_bound(
                nf, fld, cyl, dg.IterationConfig(gamma_inf=gamma, k_max=k_max, alpha=alpha, exponent_e=ee))
        rep.bound_ratio = dg.verify_parabolic_bound(nf, fld, cyl, cfg)
        out.update(cylinder={"center": list(center), "radius": R, "t_center": cyl.t_center,
                             "t_half": cyl.t_half}, bound_ratio_by_exponent=ratios)
        passed = rep.passed and all(math.isfinite(r) for r in ratios.values())
    out.update(rep.as_dict())
    out["passed"] = bool(passed)
    text = _json(_clean(out))
    if s.get("report"):
        atomic_write(s["report"], text)
    else:
        sys.stdout.write(text)
    if s.get("csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "W_k", "Y_k", "Z_k", "C_k"])
        for k, W in enumerate(rep.W):
            Y = rep.Y[k] if rep.Y else ""
            Z = rep.Z[k] if rep.Z else ""
            C = rep.recursion_constants[k] if k < len(rep.recursion_constants) else ""
            w.writerow([k, repr(W), repr(Y) if Y != "" else "", repr(Z) if Z != "" else "",
                        repr(C) if C != "" else ""])
        atomic_write(s["csv"], buf.getvalue())
    return 0 if passed else 2


def cmd_energy_check(s, args):
    nf = parse_nfunction(s["phi"])
    fld = load_field(s["field"])
    if isinstance(fld, SpaceTimeField):
        fld = fld.frame(fld.frames - 1)
    center, width = _center_and_width(fld.grid)
    R = float(s["radius"]) if s["radius"] is not None else 0.2 * width
    ball = Ball(center, R)
    v = gradient(fld).norm()
    vmax = float(np.max(v[ball.contains(fld.grid.coords())])) if v.size else 0.0
    gammas = np.linspace(0.0, vmax, int(s["levels"]), endpoint=False)
    q = dg.default_q(nf)
    pairs, C = dg.energy_sweep(nf, fld, ball, gammas, q)
    out = {"seed": int(s["seed"]), "phi": str(nf), "q": q, "fitted_constant": C,
           "levels": gammas.tolist(), "lhs": [p[0] for p in pairs], "rhs": [p[1] for p in pairs]}
    passed = math.isfinite(C) and all(l <= C * r * (1 + 1e-12) or l == 0 for l, r in pairs)
    out["passed"] = bool(passed)
    text = _json(_clean(out))
    if s.get("report"):
        atomic_write(s["report"], text)
    else:
        _emit(text, s.get("out"))
    return 0 if passed else 2


COMMANDS = {
    "nfun-report": cmd_nfun_report,
    "equivalence-scan": cmd_equivalence_scan,
    "solve-elliptic": cmd_solve_elliptic,
    "solve-parabolic": cmd_solve_parabolic,
    "verify-degiorgi": cmd_verify_degiorgi,
    "energy-check": cmd_energy_check,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        s = _settings(args)
        if s["format"] is None:
            s["format"] = "csv" if args.command == "equivalence-scan" else "json"
        return COMMANDS[args.command](s, args)
    except (PhiLapError, OSError, ValueError) as exc:
        print(f"philap: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
# Walk through the N-function toolbox on three families.
#
# Usage:
#   python demos/nfunction_tour.py
#
# For each family we print the doubling constant, the band of t phi''/phi',
# a couple of conjugate values and the worst Young gap over a random sample.
# Then we compare the Luxemburg norm of a bump with its L^p norm.
import numpy as np

from philap import Power, PowerLog, delta2_estimate, luxemburg_norm, phi_star, young_gap

rng = np.random.default_rng(0)

for nf in (Power(1.5), Power(3.0), PowerLog()):
    rep = delta2_estimate(nf, 1e-6, 1e6, 2048)
    lo, hi = rep.assumption_band
    s = rng.lognormal(0.0, 2.0, 5000)
    t = rng.lognormal(0.0, 2.0, 5000)
    gap = float(np.min(young_gap(nf, s, t)))
    print(f"{nf!s:>12}  Delta2 = {rep.constant:.4f}   t phi''/phi' in [{lo:.4f}, {hi:.4f}]")
    print(f"{'':>12}  phi*(1) = {float(phi_star(nf, 1.0)):.6f}   phi*(10) = {float(phi_star(nf, 10.0)):.4f}"
          f"   min Young gap = {gap:.2e}")

# With phi(t) = t^p the Luxemburg norm over an averaged measure is the averaged L^p norm.
x = np.linspace(-1, 1, 401)
f = np.exp(-8 * x ** 2)
for p in (1.5, 2.0, 3.0):
    lux = luxemburg_norm(f, Power(p))
    lp = np.mean(f ** p) ** (1 / p)
    print(f"p = {p}: Luxemburg {lux:.10f}   averaged L^p {lp:.10f}")

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from philap.errors import BracketError, ConfigError, ConjugateError, DomainError
from philap.nfunction import (Power, PowerLog, Psi, Shifted, Tabulated, conjugate_identity_ratio,
                              cutoff_exponent, delta2_estimate, luxemburg_norm, parse_nfunction,
                              phi, phi_star, psi_props, shifted_props, young_gap)

powers = st.sampled_from([1.2, 1.5, 2.0, 2.5, 3.0, 4.0])
pos = st.floats(1e-4, 1e4)


def families():
    t = np.linspace(0, 50, 2001)
    return [Power(1.5), Power(2.0), Power(3.0), PowerLog(), Tabulated(t, t ** 1.3 + t)]


def test_phi_examples():
    assert phi(Power(2), 3.0) == 9.0
    assert phi(Power(1.5), 4.0) == pytest.approx(8.0, rel=1e-15)
    for nf in families():
        assert phi(nf, 0.0) == 0.0


def test_phi_star_examples():
    assert phi_star(Power(2), 2.0) == pytest.approx(1.0, rel=1e-14)
    # (p-1) p^(-p/(p-1)) t^(p/(p-1)) at p = 3, t = 3 is 2 * 3^(-3/2) * 3^(3/2) = 2
    assert phi_star(Power(3), 3.0) == pytest.approx(2.0, rel=1e-14)
    for nf in families():
        assert float(phi_star(nf, 0.0)) == 0.0


@pytest.mark.parametrize("p,s,expected", [(2, 5.0, 1.0), (3, 0.7, 2.0), (1.5, 10.0, 0.5)])
def test_conjugate_identity_ratio(p, s, expected):
    assert conjugate_identity_ratio(Power(p), s) == pytest.approx(expected, rel=1e-12)


def test_conjugate_identity_ratio_rejects_zero():
    with pytest.raises(DomainError):
        conjugate_identity_ratio(Power(2), 0.0)


@pytest.mark.parametrize("nf", [PowerLog(), Tabulated(np.linspace(0, 50, 2001),
                                                      np.linspace(0, 50, 2001) ** 1.3)])
def test_legendre_conjugate_matches_quadrature(nf):
    t = np.geomspace(1e-2, 20, 17)
    a = phi_star(nf, t, "legendre")
    b = phi_star(nf, t, "quadrature")
    # the inverse of a piecewise linear derivative has kinks, which limits the quadrature
    np.testing.assert_allclose(a, b, rtol=1e-4)


@pytest.mark.parametrize("p", [2, 3])
def test_delta2_power(p):
    rep = delta2_estimate(Power(p), 1e-6, 1e6, 1024)
    assert rep.constant == pytest.approx(2 ** p, abs=1e-9)
    assert rep.assumption_band == pytest.approx((p - 1, p - 1), abs=1e-9)


def test_delta2_powerlog_limit():
    rep = delta2_estimate(PowerLog(), 1e-6, 1e6, 4096)
    assert 2.0 < rep.constant <= 4.0 + 1e-9
    assert rep.constant > 3.99


def test_delta2_needs_samples():
    with pytest.raises(DomainError):
        delta2_estimate(Power(2), 1e-3, 1, 8)


@pytest.mark.parametrize("s,t,gap", [(2.0, 4.0, 0.0), (0.0, 0.0, 0.0), (1.0, 1.0, 0.25)])
def test_young_examples(s, t, gap):
    assert float(young_gap(Power(2), s, t)) == pytest.approx(gap, abs=1e-15)


@given(s=pos, t=pos, i=st.integers(0, 3))
def test_young_nonnegative(s, t, i):
    nf = families()[i]
    assert young_gap(nf, s, t) >= -1e-9


@given(s=st.floats(1e-3, 40), i=st.integers(0, 4))
def test_young_equality(s, i):
    nf = families()[i]
    assert abs(young_gap(nf, s, nf.d1(s))) <= 1e-8 * (1 + nf(s))


@given(a=st.floats(0, 40), b=st.floats(0, 40), th=st.floats(0, 1), i=st.integers(0, 4))
def test_convexity(a, b, th, i):
    nf = families()[i]
    lhs = nf(th * a + (1 - th) * b)
    assert lhs <= th * nf(a) + (1 - th) * nf(b) + 1e-9 * (1 + nf(max(a, b)))


@given(i=st.integers(0, 3))
def test_t_dphi_over_phi_band(i):
    nf = families()[i]
    t = np.geomspace(1e-4, 1e4, 200)
    r = t * nf.d1(t) / nf(t)
    d2 = delta2_estimate(nf, 1e-4, 1e4, 512).constant
    assert np.all(r >= 1 - 1e-12) and np.all(r <= d2 * (1 + 1e-9))


def test_luxemburg_examples():
    assert luxemburg_norm([3.0] * 10, Power(2)) == pytest.approx(3.0, rel=1e-10)
    assert luxemburg_norm(np.zeros(5), Power(2)) == 0.0
    for p in (1.5, 2, 3):
        assert luxemburg_norm([1.0, 0.0], Power(p)) == pytest.approx(2 ** (-1 / p), rel=1e-10)


@given(c=st.floats(1e-3, 1e3), p=powers,
       vals=st.lists(st.floats(0, 100), min_size=1, max_size=20).filter(lambda v: max(v) > 1e-6))
def test_luxemburg_homogeneous(c, p, vals):
    nf = Power(p)
    a = luxemburg_norm(np.asarray(vals) * c, nf)
    b = luxemburg_norm(vals, nf)
    assert a == pytest.approx(c * b, rel=1e-8)


def test_luxemburg_weights():
    n = luxemburg_norm([1.0, 0.0], Power(2), weights=[0.25, 0.75])
    assert n == pytest.approx(0.5, rel=1e-10)


def test_shifted_reduces_at_zero():
    nf = Power(2.5)
    t = np.geomspace(1e-3, 1e3, 40)
    sh = Shifted(nf, 0.0)
    np.testing.assert_array_equal(sh.d1(t), nf.d1(t))
    np.testing.assert_allclose(sh(t), nf(t), rtol=1e-12)


def test_shifted_power2():
    rep = shifted_props(Power(2), lambdas=(0.0, 1.0, 10.0))
    assert rep.delta2_sup <= 4 + 1e-9
    d2 = delta2_estimate(Power(2), 1e-3, 1e3, 48).constant
    assert rep.delta2_by_lambda[0] == pytest.approx(d2, rel=1e-12)
    for lam in np.geomspace(1e-3, 1e3, 13):
        r = Shifted(Power(2), lam)(lam) / Power(2)(lam)
        assert rep.k2_band[0] - 1e-12 <= r <= rep.k2_band[1] + 1e-12


@pytest.mark.parametrize("nf", [Power(1.5), Power(3), PowerLog()])
def test_shifted_bounded_uniformly(nf):
    rep = shifted_props(nf, lambdas=(0.0, 0.1, 1.0, 10.0, 100.0))
    assert math.isfinite(rep.delta2_sup) and rep.eps > 0
    assert 0 < rep.k2_band[0] <= rep.k2_band[1] < math.inf
    assert cutoff_exponent(rep.eps) > 2


def test_shift_derivative_monotone():
    t = np.linspace(0, 10, 501)
    for lam in (0.0, 0.5, 5.0):
        d = Shifted(Power(1.5), lam).d1(t)
        assert d[0] == 0 and np.all(np.diff(d) >= 0)


def test_psi_power():
    rep = psi_props(Power(2))
    assert rep.sqrt_band == pytest.approx((1.0, 1.0), abs=1e-12)
    for p in (1.5, 2.0, 3.0):
        rep = psi_props(Power(p))
        assert rep.index_band == pytest.approx((p / 2, p / 2), abs=1e-12)
        t = np.geomspace(1e-3, 1e3, 9)
        np.testing.assert_allclose(Psi(Power(p)).d1(t), math.sqrt(p) * t ** (p / 2), rtol=1e-14)


def test_psi_powerlog_bands_positive():
    rep = psi_props(PowerLog())
    assert 0 < rep.index_band[0] <= rep.index_band[1] < math.inf
    assert 0 < rep.sqrt_band[0] <= rep.sqrt_band[1] < math.inf


def test_tabulated_is_exact_for_linear_derivative():
    t = np.linspace(0, 10, 11)
    nf = Tabulated(t, 2 * t)
    x = np.linspace(0, 10, 37)
    np.testing.assert_allclose(nf(x), x ** 2, rtol=1e-14, atol=1e-14)
    with pytest.raises(DomainError):
        nf(11.0)


def test_tabulated_flat_segment_rejected():
    nf = Tabulated([0, 1, 2, 3], [0, 1, 1, 2])
    with pytest.raises(ConjugateError):
        phi_star(nf, 0.5)


def test_tabulated_validation():
    with pytest.raises(ConfigError):
        Tabulated([0, 1, 1], [0, 1, 2])
    with pytest.raises(ConfigError):
        Tabulated([0, 1, 2], [0, 2, 1])


def test_parse_forms(tmp_path):
    assert parse_nfunction("power:2.5") == Power(2.5)
    assert isinstance(parse_nfunction("powerlog"), PowerLog)
    table = tmp_path / "d.txt"
    table.write_text("# t dphi\n0 0\n1 2\n2 4\n")
    cfg = tmp_path / "phi.cfg"
    cfg.write_text("family = tabulated  # from a table\nfile = d.txt\n")
    nf = parse_nfunction(str(cfg))
    assert nf(2.0) == pytest.approx(4.0)
    assert parse_nfunction("family = power\np = 3") == Power(3)
    with pytest.raises(ConfigError):
        parse_nfunction("family = cubic")
    with pytest.raises(ConfigError):
        parse_nfunction("family = power")


def test_negative_arguments_rejected():
    with pytest.raises(DomainError):
        Power(2)(-1.0)
    with pytest.raises(DomainError):
        phi_star(Power(2), -1.0)


def test_luxemburg_bracket_failure():
    class Flat(Power):
        def __call__(self, t):
            return np.full_like(np.asarray(t, dtype=float), 2.0)

    with pytest.raises(BracketError):
        luxemburg_norm([1.0], Flat(2.0))

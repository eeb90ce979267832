import numpy as np
import pytest
from hypothesis import given, strategies as st

from philap.errors import ConfigError, DomainError, EmptyRegionError, ResolutionError
from philap.fields import (Ball, Cube, Cutoff, Cylinder, SpaceTimeField, UniformGrid, VectorField,
                           avg_integral, difference_quotient, gradient, load_csv, load_field,
                           make_cutoff_sequence, make_cylinder_cutoffs, ramp, save_csv, save_field)


def grid2(N=16, lo=-1.0, hi=1.0):
    return UniformGrid.box(N, lo, hi, 2)


def test_grid_basics():
    g = UniformGrid.box(8, 0.0, 1.0, 3)
    assert g.shape == (9, 9, 9) and g.h == 0.125 and g.size == 729
    assert g.cell_volume == pytest.approx(0.125 ** 3)
    assert g.coords().shape == (9, 9, 9, 3)
    assert g.boundary_mask().sum() == 729 - 7 ** 3
    assert g.refine().shape == (17, 17, 17)
    with pytest.raises(ConfigError):
        UniformGrid((2, 5), 0.1)
    with pytest.raises(ConfigError):
        UniformGrid((5, 5), 0.0)


@given(seed=st.integers(0, 2 ** 32 - 1), dim=st.integers(1, 3), m=st.integers(1, 3))
def test_gradient_exact_on_affine(seed, dim, m):
    rng = np.random.default_rng(seed)
    g = UniformGrid.box(6, -1.0, 2.0, dim)
    B = rng.normal(size=(dim, m))
    c = rng.normal(size=m)
    u = VectorField(g, g.coords() @ B + c)
    G = gradient(u).values
    assert np.max(np.abs(G - B)) <= 1e-12 * (1 + np.abs(B).max())


def test_gradient_constant_and_linear():
    g = grid2()
    assert np.all(gradient(VectorField(g, np.full(g.shape, 3.0))).values == 0)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=g.shape), rng.normal(size=g.shape)
    lhs = gradient(VectorField(g, 2 * a - 3 * b)).values
    rhs = 2 * gradient(VectorField(g, a)).values - 3 * gradient(VectorField(g, b)).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_gradient_second_order():
    errs = []
    for N in (16, 32, 64):
        g = UniformGrid.box(N, 0.0, 1.0, 1)
        x = g.coords()[..., 0]
        d = gradient(VectorField(g, np.sin(np.pi * x))).values[..., 0, 0]
        errs.append(np.max(np.abs(d - np.pi * np.cos(np.pi * x))))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_vector_field_validation():
    g = grid2(4)
    with pytest.raises(ConfigError):
        VectorField(g, np.zeros((4, 4)))
    with pytest.raises(ConfigError):
        VectorField(g, np.full(g.shape, np.nan))
    with pytest.raises(ConfigError):
        SpaceTimeField(g, 0.1, np.zeros((1,) + g.shape))


def test_avg_integral_examples():
    g = UniformGrid.box(40, 0.0, 1.0, 2)
    x = g.coords()
    whole = Cube((0.5, 0.5), 1.0)
    assert avg_integral(np.full(g.shape, 2.5), Ball((0.5, 0.5), 0.3), g) == pytest.approx(2.5)
    half = (x[..., 0] < 0.5).astype(float)
    assert abs(avg_integral(half, whole, g) - 0.5) <= 2 * g.h
    rng = np.random.default_rng(1)
    f, h = rng.normal(size=g.shape), rng.normal(size=g.shape)
    b = Ball((0.4, 0.6), 0.25)
    assert avg_integral(2 * f - h, b, g) == pytest.approx(2 * avg_integral(f, b, g)
                                                          - avg_integral(h, b, g), abs=1e-12)
    with pytest.raises(EmptyRegionError):
        avg_integral(f, Ball((5.0, 5.0), 0.1), g)


def test_avg_region_splitting():
    g = UniformGrid((8,), 1.0)
    rng = np.random.default_rng(2)
    f = rng.normal(size=g.shape)
    left = Cube((1.5,), 3.2)     # nodes 0..3
    right = Cube((5.5,), 3.2)    # nodes 4..7
    both = Cube((3.5,), 7.2)
    assert avg_integral(f, both, g) == pytest.approx(
        0.5 * (avg_integral(f, left, g) + avg_integral(f, right, g)), abs=1e-14)


def test_difference_quotients():
    h = 0.1
    x = np.arange(20) * h
    np.testing.assert_allclose(difference_quotient(3 * x + 1, 0, 2, h), 3.0, rtol=1e-12)
    assert np.all(difference_quotient(np.full(10, 4.0), 0, 1, h) == 0)
    f = np.random.default_rng(3).normal(size=15)
    fwd = difference_quotient(f, 0, 1, h)
    second = difference_quotient(fwd, 0, 1, h)        # backward of forward, shifted index
    np.testing.assert_allclose(second, (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2, rtol=1e-12)
    with pytest.raises(DomainError):
        difference_quotient(f, 0, 15, h)
    with pytest.raises(DomainError):
        difference_quotient(f, 0, 0, h)


def test_ramp_profile():
    s = np.linspace(-0.5, 1.5, 2001)
    r = ramp(s)
    assert np.all((r >= 0) & (r <= 1))
    assert np.all(r[s <= 0] == 1) and np.all(r[s >= 1] == 0)
    assert np.max(np.abs(np.diff(r) / np.diff(s))) <= 15 / 8 + 1e-3


def test_cutoff_sandwich_and_gradient():
    g = UniformGrid.box(128, -1.0, 1.0, 2)
    ball = Ball((0.0, 0.0), 0.4)
    cuts = make_cutoff_sequence(ball, 6, 3.0, g)
    x = g.coords()
    r = np.linalg.norm(x, axis=-1)
    assert cuts[0].r_in == pytest.approx(0.6) and cuts[0].r_out == pytest.approx(0.8)
    for k, c in enumerate(cuts):
        z = c.space(x)
        assert c.space(np.zeros(2)) == 1.0
        inner = r <= ball.radius * (1 + 2.0 ** (-k - 1))
        outer = r <= ball.radius * (1 + 2.0 ** (-k))
        assert np.all(z[inner] == 1) and np.all(z[~outer] == 0)
        assert np.all((z >= inner) & (z <= outer))
        assert c.max_grad(g) * ball.radius / 2 ** k <= 8
        if k:
            assert np.all(z <= cuts[k - 1].space(x) + 0.0)


def test_cutoff_resolution():
    g = UniformGrid.box(16, -1.0, 1.0, 2)
    with pytest.raises(ResolutionError):
        make_cutoff_sequence(Ball((0.0, 0.0), 0.1), 3, 3.0, g)
    with pytest.raises(ResolutionError):
        make_cutoff_sequence(Ball((0.8, 0.0), 0.3), 3, 3.0, g)
    with pytest.raises(ConfigError):
        Cutoff((0.0, 0.0), 0.5, 0.4)
    with pytest.raises(ConfigError):
        Cutoff((0.0, 0.0), 0.1, 0.4, q=2.0)


def test_cylinder_cutoffs():
    cyl = Cylinder((0.5, 0.5), 0.1, 0.5, 0.05)
    cuts = make_cylinder_cutoffs(cyl, 4, 3.0)
    assert cuts[0].r_in == pytest.approx(0.3) and cuts[0].r_out == pytest.approx(0.4)
    assert cuts[0].t_in == pytest.approx(0.15) and cuts[0].t_out == pytest.approx(0.2)
    g = UniformGrid.box(32, 0.0, 1.0, 2)
    times = np.linspace(0.2, 0.8, 61)
    for a, b in zip(cuts, cuts[1:]):
        assert np.all(b.values(g, times) <= a.values(g, times))


def test_cylinder_average():
    g = UniformGrid.box(20, 0.0, 1.0, 2)
    times = np.linspace(0, 1, 11)
    f = np.broadcast_to(times[:, None, None], (11,) + g.shape)
    cyl = Cylinder((0.5, 0.5), 0.2, 0.5, 0.2)
    assert avg_integral(f, cyl, g, times) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        avg_integral(f, cyl, g)


def test_field_roundtrip(tmp_path):
    g = UniformGrid((5, 4), 0.25, (-1.0, 0.5))
    rng = np.random.default_rng(4)
    u = VectorField(g, rng.normal(size=(5, 4, 2)))
    save_field(tmp_path / "u.fld", u)
    v = load_field(tmp_path / "u.fld")
    assert v.grid == g and np.array_equal(v.values, u.values)
    st = SpaceTimeField(g, 0.01, rng.normal(size=(3, 5, 4, 1)), t0=0.5)
    save_field(tmp_path / "s.fld", st)
    w = load_field(tmp_path / "s.fld")
    assert w.tau == 0.01 and w.t0 == 0.5 and np.array_equal(w.values, st.values)
    save_csv(tmp_path / "u.csv", u)
    c = load_csv(tmp_path / "u.csv")
    assert c.grid == g and np.array_equal(c.values, u.values)
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ConfigError):
        load_field(tmp_path / "bad")
    assert not list(tmp_path.glob(".*"))     # no temporary files left behind

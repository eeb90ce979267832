"""Solved fields shared by several test modules (computed once per process)."""
from functools import lru_cache

import numpy as np

from philap import Power, SolveConfig, UniformGrid, solve_elliptic, solve_parabolic
from philap.solvers import preset

ELLIPTIC_TOL = 1e-10


@lru_cache(maxsize=None)
def elliptic(p, bc, N, tol=ELLIPTIC_TOL):
    grid = UniformGrid.box(N, -1.0, 1.0, 2)
    return solve_elliptic(Power(p), grid, preset(bc), SolveConfig(tol_residual=tol))


def sine(grid):
    x = grid.coords()
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


@lru_cache(maxsize=None)
def parabolic(p, N, steps, T=0.04, tol=1e-10):
    grid = UniformGrid.box(N, 0.0, 1.0, 2)
    return solve_parabolic(Power(p), grid, sine(grid), None, T / steps, steps,
                           SolveConfig(tol_residual=tol))

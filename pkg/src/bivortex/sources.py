"""Regularized vortex sources and subtractive background fields.

The Dirac sources 4 pi sum_j delta_{p_j} are smoothed into bumps

    4 eps / (eps + |x - p_j|^2)^2,

each of total integral 4 pi for every eps > 0.  Subtracting the closed-form
background

    u0eps(x) = sum_j ln((eps + |x-p_j|^2) / (1 + |x-p_j|^2))

removes the bumps from the equation and leaves the smooth, eps-independent
residual field h1(x) = sum_j 4/(1+|x-p_j|^2)^2, via the identity

    Delta ln((eps + r^2)/(1 + r^2)) = 4 eps/(eps+r^2)^2 - 4/(1+r^2)^2.

On Dirichlet domains a discrete-harmonic correction U0eps with boundary data
-u0eps makes f0 = u0eps + U0eps vanish on the boundary.  On the torus the
background solves a spectral Poisson problem with the mean-balanced bump
source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VortexConfiguration
from .elliptic import poisson_solve_dirichlet, poisson_solve_periodic
from .grids import Grid


def _point_offsets(points, grid: Grid):
    """Squared distances |x - p|^2 per point; periodic grids use the 3x3
    periodized images so the bump tails wrap correctly."""
    xx, yy = grid.meshgrid()
    if grid.kind == "periodic":
        t1, t2 = grid.periods
        shifts = [(a * t1, b * t2) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    else:
        shifts = [(0.0, 0.0)]
    for px, py in points:
        for sx, sy in shifts:
            dx = xx - (px + sx)
            dy = yy - (py + sy)
            yield dx * dx + dy * dy


def regularized_delta_sum(points, epsilon: float, grid: Grid) -> np.ndarray:
    """Sum of bumps 4 eps/(eps + |x-p_j|^2)^2 over the nodes."""
    assert epsilon > 0
    out = grid.zeros()
    for r2 in _point_offsets(points, grid):
        out += 4.0 * epsilon / (epsilon + r2) ** 2
    return out


def background_fields(vortices: VortexConfiguration, epsilon: float,
                      grid: Grid):
    """Closed-form backgrounds (u0eps, v0eps) and residuals (h1, h2)."""
    assert epsilon > 0

    def build(points):
        u0 = grid.zeros()
        h = grid.zeros()
        for r2 in _point_offsets(points, grid):
            u0 += np.log((epsilon + r2) / (1.0 + r2))
            h += 4.0 / (1.0 + r2) ** 2
        return u0, h

    u0eps, h1 = build(vortices.upper_points)
    v0eps, h2 = build(vortices.lower_points)
    return u0eps, v0eps, h1, h2


def harmonic_correction(boundary_data: np.ndarray, grid: Grid) -> np.ndarray:
    """Discrete-harmonic extension of boundary_data (pinned entries used)."""
    assert grid.kind == "dirichlet"
    return poisson_solve_dirichlet(grid.zeros(), boundary_data, grid)


@dataclass
class RegularizedBackground:
    """Background package for a bounded (Dirichlet) domain."""
    epsilon: float
    u0eps: np.ndarray
    v0eps: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    U0eps: np.ndarray
    V0eps: np.ndarray
    f0: np.ndarray  # u0eps + U0eps, zero on the boundary
    g0: np.ndarray  # v0eps + V0eps, zero on the boundary


def bounded_background(vortices: VortexConfiguration, epsilon: float,
                       grid: Grid) -> RegularizedBackground:
    u0eps, v0eps, h1, h2 = background_fields(vortices, epsilon, grid)
    U0eps = harmonic_correction(-u0eps, grid)
    V0eps = harmonic_correction(-v0eps, grid)
    return RegularizedBackground(epsilon, u0eps, v0eps, h1, h2,
                                 U0eps, V0eps, u0eps + U0eps, v0eps + V0eps)


@dataclass
class TorusBackground:
    """Mean-zero periodic backgrounds u0, v0 and their bump sources."""
    epsilon: float
    u0: np.ndarray
    v0: np.ndarray
    src_u: np.ndarray  # mean-balanced bump source, Delta u0 = src_u
    src_v: np.ndarray


def torus_background(vortices: VortexConfiguration, grid: Grid,
                     epsilon: float) -> TorusBackground:
    """Solve Delta u0 = -4 pi N1/|Omega| + (periodized bumps) spectrally.

    The bump source is shifted by its own discrete mean, which realizes the
    -4 pi N1/|Omega| term with the quadrature-exact bump mass and makes the
    problem solvable on the torus.  The additive constant is fixed by mean
    zero (it is absorbed downstream, so results do not depend on it).
    """
    assert grid.kind == "periodic"

    def build(points):
        if not points:
            return grid.zeros(), grid.zeros()
        src = regularized_delta_sum(points, epsilon, grid)
        src = src - float(src.mean())
        assert abs(float(src.mean())) <= 1e-10 * max(1.0, float(np.abs(src).max()))
        return poisson_solve_periodic(src, grid), src

    u0, src_u = build(vortices.upper_points)
    v0, src_v = build(vortices.lower_points)
    return TorusBackground(epsilon, u0, v0, src_u, src_v)

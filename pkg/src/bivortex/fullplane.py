"""Full-plane limits: continuation schedules, the scalar topological
equation, and the asymptotic decay machinery.

The full-plane problem is approached through two limits realized on masked
disks: the regularization parameter eps -> 0 and the disk radius R -> oo.
The scalar ("single") equation

    Delta u = 8 (e^u - 1) + 4 pi sum_{j=1}^{N+} delta_{p_j},  u = 0 on dB_R

carries the topological classification: lambda = (4/pi) int (1 - e^u) - 2 N+
vanishes exactly on topological solutions.  The decay toolkit samples the
profile coefficient Phi(r), solves the radial comparison ODE

    w'' + w'/t - Phi(t) w = 0,

and fits the model C e^{-2 r} r^{-1/2} to circle maxima of the fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .core import (CouplingParams, Regime, VortexConfiguration,
                   build_coupling, classify_regime)
from .elliptic import NewtonSettings, semilinear_newton
from .errors import ConfigError
from .grids import Grid
from .sources import regularized_delta_sum
from .variational import (SolverSettings, VariationalState,
                          make_bounded_problem, nested_minimize, recover_uv)

LN2 = math.log(2.0)


@dataclass
class ContinuationSchedule:
    """Decreasing eps ladder and increasing radius ladder.

    Radii pair with node counts so the spacing stays roughly constant as
    the disk grows.  All radii must exceed the largest vortex modulus.
    """
    epsilons: list
    radii: list          # list of (R, n) pairs


    def __post_init__(self):
        eps = list(self.epsilons)
        assert all(e > 0 for e in eps)
        assert all(a > b for a, b in zip(eps, eps[1:])), "epsilons must decrease"
        rr = [r for r, _ in self.radii]
        assert all(a < b for a, b in zip(rr, rr[1:])), "radii must increase"

    @staticmethod
    def default(n_finest: int = 512, R_finest: float = 8.0,
                n_eps: int = 5) -> "ContinuationSchedule":
        h = 2.0 * R_finest / (n_finest - 1)
        eps0 = (2.0 * h) ** 2
        eps = [eps0 * 2.0 ** (-k) for k in range(n_eps)]
        radii = []
        for R in (4.0, 6.0, 8.0, 12.0):
            if R > R_finest:
                break
            n = max(65, int(round((n_finest - 1) * R / R_finest)) + 1)
            radii.append((R, n))
        return ContinuationSchedule(eps, radii)


@dataclass
class DecayFit:
    rate: float          # exponential rate with the r^{-1/2} correction fixed
    power: float         # free-power fit exponent (target -1/2)
    C: float
    window: tuple
    r2: float            # goodness of the fixed-power model
    rate_plain: float    # pure-exponential fit (no power correction)
    r2_plain: float
    rate_free: float     # rate from the free-power fit
    rate_gradient: float  # fixed-power fit on gradient magnitudes


# ---------------------------------------------------------------------------
# scalar topological equation
# ---------------------------------------------------------------------------

def single_equation_solve(vortices_merged, R: float, n: int,
                          epsilons=None,
                          settings: NewtonSettings | None = None):
    """Solve the shifted scalar equation on B_R with eps-continuation.

    Returns (grid, u) with u <= 0, strictly negative in the interior when
    there are vortices.  The Dirac sources are realized as the standard
    eps-bumps and eps is lowered along the schedule with warm starts.
    """
    grid = Grid.disk(R, n)
    pts = list(vortices_merged)
    for x, y in pts:
        if math.hypot(x, y) >= R - 1.0:
            raise ConfigError("vortex points must lie inside B_{R-1}")
    if epsilons is None:
        # floor at (2h)^2: below that the bump spike is unresolved and its
        # midpoint-quadrature mass drifts off 4 pi, polluting the integrals
        h = 2.0 * R / (n - 1)
        epsilons = [(4.0 * h) ** 2, (3.0 * h) ** 2, (2.0 * h) ** 2]
    u = grid.zeros()
    if not pts:
        return grid, u
    for eps in epsilons:
        bump = regularized_delta_sum(pts, eps, grid)

        def F(s, bump=bump):
            return 8.0 * (np.exp(s) - 1.0) + bump

        def dF(s):
            return 8.0 * np.exp(s)

        u = semilinear_newton(grid, F, dF, guess=u, boundary_values=0.0,
                              settings=settings)
    return grid, u


def lambda_estimate(u: np.ndarray, grid: Grid, Nplus: int) -> float:
    """Asymptotic slope lambda = (4/pi) int (1 - e^u) dx - 2 N+.

    Zero identifies the topological branch.
    """
    if grid.kind == "dirichlet":
        vals = 1.0 - np.exp(u[grid.mask])
    else:
        vals = (1.0 - np.exp(u)).ravel()
    return 4.0 / math.pi * grid.cell_area * float(vals.sum()) - 2.0 * Nplus


# ---------------------------------------------------------------------------
# coupled domain continuation
# ---------------------------------------------------------------------------

def _interp_dirichlet(values: np.ndarray, grid_old: Grid, grid_new: Grid,
                      fill: float = 0.0) -> np.ndarray:
    """Bilinear resample of a masked-rectangle field; outside data -> fill."""
    from scipy.interpolate import RegularGridInterpolator
    f = RegularGridInterpolator((grid_old.xs(), grid_old.ys()), values,
                                bounds_error=False, fill_value=fill)
    xx, yy = grid_new.meshgrid()
    out = f(np.stack([xx.ravel(), yy.ravel()], axis=1)).reshape(grid_new.shape)
    out[~grid_new.mask] = 0.0
    return out


def boundary_layer_indicator(u: np.ndarray, grid: Grid, R: float) -> float:
    """max |u + ln2| on the annulus R-1.25 < |x| < R-0.75 (near-edge band)."""
    r = grid.radii()
    band = grid.mask & (r > R - 1.25) & (r < R - 0.75)
    assert band.any()
    return float(np.abs(u[band] + LN2).max())


def domain_continuation(params: CouplingParams, vortices: VortexConfiguration,
                        schedule: ContinuationSchedule,
                        settings: SolverSettings | None = None):
    """Grow the disk along the radius ladder with warm starts.

    The eps ladder is walked on the first (smallest) disk; later disks reuse
    the final eps.  Only the -4 <= detK < 0 regime is admitted: for
    detK < -4 no bounds survive the limit and the continuation is refused.
    Returns (problem, state, report, indicators) where indicators is the
    per-radius boundary-layer history max_{|x| ~ R-1} |u + ln2|.
    """
    K = build_coupling(params)
    if classify_regime(K) is not Regime.INDEFINITE_A:
        raise ConfigError(
            "domain continuation to the full plane requires -4 <= detK < 0; "
            "no estimates are available beyond that range")
    settings = settings or SolverSettings()
    indicators = []
    state = None
    grid_prev = None
    for i, (R, n) in enumerate(schedule.radii):
        grid = Grid.disk(R, n)
        eps_list = schedule.epsilons if i == 0 else [schedule.epsilons[-1]]
        for eps in eps_list:
            problem = make_bounded_problem(params, vortices, grid, eps)
            init = None
            if state is not None:
                if grid_prev is grid:
                    init = state
                else:
                    init = VariationalState(
                        _interp_dirichlet(state.xi, grid_prev, grid),
                        _interp_dirichlet(state.zeta, grid_prev, grid))
            state, report = nested_minimize(problem, settings, init=init)
            grid_prev = grid
        u, v = recover_uv(problem, state)
        indicators.append(boundary_layer_indicator(u, grid, R))
    return problem, state, report, indicators


# ---------------------------------------------------------------------------
# asymptotic machinery
# ---------------------------------------------------------------------------

def _circle_samples(values: np.ndarray, grid: Grid, r: float,
                    n_angles: int) -> np.ndarray:
    """Bilinear interpolation of a nodal field on the circle |x| = r."""
    theta = 2.0 * math.pi * np.arange(n_angles) / n_angles
    px = r * np.cos(theta)
    py = r * np.sin(theta)
    xs, ys = grid.xs(), grid.ys()
    ix = np.clip(np.searchsorted(xs, px) - 1, 0, grid.n1 - 2)
    iy = np.clip(np.searchsorted(ys, py) - 1, 0, grid.n2 - 2)
    tx = (px - xs[ix]) / grid.h1
    ty = (py - ys[iy]) / grid.h2
    v00 = values[ix, iy]
    v10 = values[ix + 1, iy]
    v01 = values[ix, iy + 1]
    v11 = values[ix + 1, iy + 1]
    return ((1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10
            + (1 - tx) * ty * v01 + tx * ty * v11)


def _quotient(s: np.ndarray) -> np.ndarray:
    """|e^s - 1| / |s| with the convention that the value is 1 at s = 0."""
    out = np.ones_like(s)
    nz = np.abs(s) > 1e-300
    out[nz] = np.abs(np.expm1(s[nz])) / np.abs(s[nz])
    return out


def phi_profile(u: np.ndarray, v: np.ndarray, grid: Grid, radii,
                K=None, n_angles: int = 128) -> list:
    """Profile coefficient Phi(r) of the decay comparison.

    Phi(r) = 4 min_{|x|=r} [ (k12/2) |e^vt - 1|/|vt| + (k11/2) |e^ut - 1|/|ut| ]

    evaluated on the shifted fields (ut, vt) = (u + ln2, v + ln2); the
    quotient is 1 at 0, so Phi -> 4 wherever both fields tend to zero.
    If K is omitted the symmetric weights k11 = k12 = 1 are used.
    """
    k11, k12 = (K.k11, K.k12) if K is not None else (1.0, 1.0)
    out = []
    for r in radii:
        ut = _circle_samples(u, grid, r, n_angles) + LN2
        vt = _circle_samples(v, grid, r, n_angles) + LN2
        val = 4.0 * float(np.min(0.5 * k12 * _quotient(vt)
                                 + 0.5 * k11 * _quotient(ut)))
        out.append((float(r), val))
    return out


def bellman_ode_solve(phi_pairs, t0: float, alpha0: float, T: float,
                      n_nodes: int = 2000):
    """Two-point solve of w'' + w'/t - Phi(t) w = 0 on [t0, T].

    Boundary data w(t0) = alpha0, w(T) = 0.  phi_pairs is the sampled
    profile [(r, Phi(r)), ...], interpolated linearly and extended by its
    end values.  The profile must be positive (rejected otherwise) and its
    shifted tail integral int |Phi - 4| is checked to be finite/small.
    Returns (t, w0) arrays.
    """
    rr = np.array([p[0] for p in phi_pairs])
    ff = np.array([p[1] for p in phi_pairs])
    if np.any(ff <= 0.0):
        raise ConfigError("profile coefficient must be positive")
    # integrable-tail sanity of the shifted profile
    tail = float(np.trapezoid(np.abs(ff - 4.0), rr))
    assert math.isfinite(tail)
    t = np.linspace(t0, T, n_nodes + 1)
    ht = (T - t0) / n_nodes
    c = np.interp(t, rr, ff)
    if alpha0 == 0.0:
        return t, np.zeros_like(t)
    # rows: w''(t_i) + w'(t_i)/t_i - c_i w_i = 0 for the interior nodes
    m = n_nodes - 1
    ab = np.zeros((3, m))
    rhs = np.zeros(m)
    for i in range(m):
        ti = t[i + 1]
        lo = 1.0 / ht ** 2 - 1.0 / (2.0 * ht * ti)
        di = -2.0 / ht ** 2 - c[i + 1]
        hi = 1.0 / ht ** 2 + 1.0 / (2.0 * ht * ti)
        if i > 0:
            ab[2, i - 1] = lo
        else:
            rhs[i] -= lo * alpha0
        ab[1, i] = di
        if i < m - 1:
            ab[0, i + 1] = hi
        # w(T) = 0 contributes nothing
    w_int = solve_banded((1, 1), ab, rhs)
    w = np.concatenate([[alpha0], w_int, [0.0]])
    return t, w


def reference_profile(t: np.ndarray) -> np.ndarray:
    """The comparison envelope W0(t) = e^{-2t} t^{-1/2}."""
    return np.exp(-2.0 * t) / np.sqrt(t)


def circle_max_profile(fields, grid: Grid, radii, n_angles: int = 256):
    """max over the circle of max_i |field_i|, per radius."""
    out = []
    for r in radii:
        m = 0.0
        for f in fields:
            m = max(m, float(np.abs(_circle_samples(f, grid, r, n_angles)).max()))
        out.append(m)
    return np.array(out)


def gradient_magnitude(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Central-difference gradient magnitude (one-sided at the frame edge)."""
    gx = np.gradient(values, grid.h1, axis=0)
    gy = np.gradient(values, grid.h2, axis=1)
    return np.hypot(gx, gy)


def _lsq_fit(r: np.ndarray, y: np.ndarray, power: float | None):
    """Fit ln y = ln C - rate*r + power*ln r; power fitted if None.

    Returns (rate, power, C, r2) where r2 is the coefficient of
    determination of the linear model in ln y.
    """
    ln_y = np.log(y)
    if power is None:
        A = np.stack([np.ones_like(r), -r, np.log(r)], axis=1)
        coef, *_ = np.linalg.lstsq(A, ln_y, rcond=None)
        lnC, rate, pw = coef[0], coef[1], coef[2]
    else:
        target = ln_y - power * np.log(r)
        A = np.stack([np.ones_like(r), -r], axis=1)
        coef, *_ = np.linalg.lstsq(A, target, rcond=None)
        lnC, rate, pw = coef[0], coef[1], power
        ln_y = target  # r2 measured in the adjusted variable
    fitted = A @ coef
    ss_res = float(np.sum((ln_y - fitted) ** 2))
    ss_tot = float(np.sum((ln_y - ln_y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(rate), float(pw), float(math.exp(lnC)), r2


def decay_fit(u: np.ndarray, v: np.ndarray, grid: Grid,
              window: tuple, n_radii: int = 16,
              n_angles: int = 256) -> DecayFit:
    """Fit the decay model C e^{-rate r} r^{power} to circle maxima.

    The shifted fields (u + ln2, v + ln2) and their gradient magnitudes are
    sampled on n_radii circles across the window.  Three fits are made: the
    power fixed at -1/2 (the model of interest), the power fixed at 0 (pure
    exponential, for the goodness comparison), and the power free.
    """
    r_lo, r_hi = window
    assert n_radii >= 10
    radii = np.linspace(r_lo, r_hi, n_radii)
    ut, vt = u + LN2, v + LN2
    y = circle_max_profile([ut, vt], grid, radii, n_angles)
    if np.any(y <= 0.0):
        raise ConfigError("window contains vanishing circle maxima")
    rate, _, C, r2 = _lsq_fit(radii, y, power=-0.5)
    rate_plain, _, _, r2_plain = _lsq_fit(radii, y, power=0.0)
    rate_free, power_free, _, _ = _lsq_fit(radii, y, power=None)
    g = circle_max_profile([gradient_magnitude(ut, grid),
                            gradient_magnitude(vt, grid)],
                           grid, radii, n_angles)
    rate_grad, _, _, _ = _lsq_fit(radii, g, power=-0.5)
    return DecayFit(rate=rate, power=power_free, C=C, window=(r_lo, r_hi),
                    r2=r2, rate_plain=rate_plain, r2_plain=r2_plain,
                    rate_free=rate_free, rate_gradient=rate_grad)

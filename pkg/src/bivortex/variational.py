"""Nested constrained minimization of the indefinite vortex functional.

The transformed unknowns are xi = u3 + v3 and zeta = u3 - v3 (bounded
domains) or their mean-free periodic analogs plus scalar means (torus).
The admissible class fixes xi as the unique solution of the first
transformed equation given zeta; minimizing the reduced functional in zeta
then recovers the second equation, because the reduced gradient IS the
second Euler-Lagrange residual (envelope identity).

The discrete functional is written with -xi*Lap(xi) quadrature so that its
exact nodal gradient coincides with the discrete residual fields.  As a
consequence the finite-difference oracle on the reduced functional matches
outer_residual to quadrature roundoff, not just to discretization order.

detK < 0 throughout; the xi-gradient term of I carries the negative sign
(the functional is indefinite, coercive only on the admissible class).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (CouplingMatrix, CouplingParams, VortexConfiguration,
                   alpha_beta, build_coupling, require_indefinite)
from .elliptic import (NewtonSettings, _solve_shifted_periodic, _lu_factor,
                       _boundary_term, _assemble_full, laplacian_apply,
                       semilinear_newton)
from .errors import (DiagnosticOverflow, Infeasible, LineSearchStalled,
                     MaxIterExceeded, Stalled)
from .grids import Grid
from .sources import (RegularizedBackground, TorusBackground,
                      bounded_background, torus_background)


@dataclass
class SolverSettings:
    tol_outer: float = 1e-8        # infinity norm of both residual fields
    tol_inner: float | None = None  # default: tol_outer / 100
    max_outer: int = 5000
    max_inner: int = 60
    min_step: float = 1e-12
    precond_shift: float = 4.0     # metric (-Delta + shift) for outer descent

    @property
    def inner_tol(self) -> float:
        return self.tol_inner if self.tol_inner is not None else self.tol_outer / 100.0


@dataclass
class VariationalState:
    xi: np.ndarray
    zeta: np.ndarray
    xibar: float = 0.0   # torus mean components; unused on bounded domains
    zetabar: float = 0.0

    def copy(self) -> "VariationalState":
        return VariationalState(self.xi.copy(), self.zeta.copy(),
                                self.xibar, self.zetabar)


@dataclass
class SolveReport:
    converged: bool = False
    message: str = ""
    iterations: list = field(default_factory=list)  # per-outer-step dicts
    residual_inner: float = math.inf
    residual_outer: float = math.inf
    functional: float = math.nan

    def to_dict(self) -> dict:
        return {"converged": self.converged, "message": self.message,
                "residual_inner": self.residual_inner,
                "residual_outer": self.residual_outer,
                "functional": self.functional,
                "iterations": self.iterations}


@dataclass
class BoundedProblem:
    grid: Grid
    K: CouplingMatrix
    vortices: VortexConfiguration
    bg: RegularizedBackground

    kind = "bounded"


@dataclass
class TorusProblem:
    grid: Grid
    K: CouplingMatrix
    vortices: VortexConfiguration
    bg: TorusBackground
    alpha: float
    beta: float

    kind = "torus"

    @property
    def area(self) -> float:
        return self.grid.area


def make_bounded_problem(params: CouplingParams, vortices: VortexConfiguration,
                         grid: Grid, epsilon: float) -> BoundedProblem:
    assert grid.kind == "dirichlet"
    K = build_coupling(params)
    require_indefinite(K)
    vortices.validate_inside(grid)
    return BoundedProblem(grid, K, vortices, bounded_background(vortices, epsilon, grid))


def make_torus_problem(params: CouplingParams, vortices: VortexConfiguration,
                       grid: Grid, epsilon: float) -> TorusProblem:
    assert grid.kind == "periodic"
    K = build_coupling(params)
    require_indefinite(K)
    vortices.validate_inside(grid)
    a, b = alpha_beta(grid.area, params, vortices)
    if not (a > 0.0 and b > 0.0):
        raise Infeasible(
            f"cell area {grid.area:g} is below the solvability threshold "
            f"(alpha={a:g}, beta={b:g} must both be positive)")
    return TorusProblem(grid, K, vortices, torus_background(vortices, grid, epsilon), a, b)


# ---------------------------------------------------------------------------
# pointwise ingredients
# ---------------------------------------------------------------------------

def _exp_guarded(arg: np.ndarray) -> np.ndarray:
    if float(arg.max()) > 700.0:
        raise DiagnosticOverflow("exponent argument exceeds 700")
    return np.exp(arg)


def _exponentials(problem, state: VariationalState):
    """The two density factors e^{f0+(xi+zeta)/2}, e^{g0+(xi-zeta)/2}."""
    if problem.kind == "bounded":
        a = problem.bg.f0 + 0.5 * (state.xi + state.zeta)
        b = problem.bg.g0 + 0.5 * (state.xi - state.zeta)
    else:
        xif = state.xi + state.xibar
        zef = state.zeta + state.zetabar
        a = problem.bg.u0 + 0.5 * (xif + zef)
        b = problem.bg.v0 + 0.5 * (xif - zef)
    return _exp_guarded(a), _exp_guarded(b)


def inner_residual(problem, state: VariationalState) -> np.ndarray:
    """Residual of the first transformed equation (admissibility)."""
    Ea, Eb = _exponentials(problem, state)
    lap = laplacian_apply(state.xi, problem.grid)
    if problem.kind == "bounded":
        r = lap - (4.0 * Ea + 4.0 * Eb - 8.0 + problem.bg.h1 + problem.bg.h2)
        r[~problem.grid.mask] = 0.0
    else:
        np_area = 4.0 * math.pi * problem.vortices.Nplus / problem.area
        r = lap - (8.0 * Ea + 8.0 * Eb - 8.0 + np_area)
    return r


def outer_residual(problem, state: VariationalState) -> np.ndarray:
    """Residual of the second transformed equation.

    By the envelope identity this field equals minus the nodal gradient of
    the reduced functional (per unit cell area) whenever the state is
    admissible.
    """
    d = problem.K.detK
    Ea, Eb = _exponentials(problem, state)
    lap = laplacian_apply(state.zeta, problem.grid)
    if problem.kind == "bounded":
        r = lap - d * Ea + d * Eb - (problem.bg.h1 - problem.bg.h2)
        r[~problem.grid.mask] = 0.0
    else:
        nm_area = 4.0 * math.pi * problem.vortices.Nminus / problem.area
        r = lap - 2.0 * d * Ea + 2.0 * d * Eb - nm_area
    return r


def functional_I(problem, state: VariationalState) -> float:
    """Midpoint-quadrature value of the indefinite functional.

    The gradient terms are written as -xi*Lap(xi) sums (exact summation by
    parts for zero-Dirichlet / periodic data), which makes the discrete
    functional exactly compatible with the residual fields above.
    """
    d = problem.K.detK
    g = problem.grid
    w = g.cell_area
    Ea, Eb = _exponentials(problem, state)
    lx = laplacian_apply(state.xi, g)
    lz = laplacian_apply(state.zeta, g)
    if problem.kind == "bounded":
        h1, h2 = problem.bg.h1, problem.bg.h2
        integ = (-(d / 8.0) * state.xi * lx - 0.5 * state.zeta * lz
                 + 2.0 * d * (Ea + Eb) - 2.0 * d * state.xi
                 + (d / 4.0) * (h1 + h2) * state.xi + (h1 - h2) * state.zeta)
        return w * float(integ[g.mask].sum())
    area = problem.area
    xif = state.xi + state.xibar
    zef = state.zeta + state.zetabar
    integ = (-(d / 8.0) * state.xi * lx - 0.5 * state.zeta * lz
             + 4.0 * d * (Ea + Eb) - 2.0 * d * xif
             + (math.pi * d * problem.vortices.Nplus / area) * xif
             + (4.0 * math.pi * problem.vortices.Nminus / area) * zef)
    return w * float(integ.sum())


def torus_mean_update(problem: TorusProblem, xitilde: np.ndarray,
                      zetatilde: np.ndarray) -> tuple[float, float]:
    """Mean components solving the two constraint integrals exactly.

    With Iu = int e^{u0+(xi~+zeta~)/2} and Iv = int e^{v0+(xi~-zeta~)/2},

        (xibar+zetabar)/2 = ln(alpha) - ln(Iu),
        (xibar-zetabar)/2 = ln(beta)  - ln(Iv),

    so that the updated exponential integrals equal alpha and beta to
    floating-point roundoff (asserted).
    """
    if not (problem.alpha > 0.0 and problem.beta > 0.0):
        raise Infeasible("alpha and beta must both be positive")
    w = problem.grid.cell_area
    Iu = w * float(_exp_guarded(problem.bg.u0 + 0.5 * (xitilde + zetatilde)).sum())
    Iv = w * float(_exp_guarded(problem.bg.v0 + 0.5 * (xitilde - zetatilde)).sum())
    su = math.log(problem.alpha) - math.log(Iu)
    sv = math.log(problem.beta) - math.log(Iv)
    xibar, zetabar = su + sv, su - sv
    # constraint check at the updated means
    cu = Iu * math.exp(su)
    cv = Iv * math.exp(sv)
    assert abs(cu - problem.alpha) <= 1e-10 * problem.alpha
    assert abs(cv - problem.beta) <= 1e-10 * problem.beta
    return xibar, zetabar


def constraint_integrals(problem: TorusProblem,
                         state: VariationalState) -> tuple[float, float]:
    """Measured values of the two constraint integrals at the state."""
    Ea, Eb = _exponentials(problem, state)
    w = problem.grid.cell_area
    return w * float(Ea.sum()), w * float(Eb.sum())


# ---------------------------------------------------------------------------
# inner solve (admissibility)
# ---------------------------------------------------------------------------

def inner_solve(problem, state: VariationalState,
                settings: SolverSettings | None = None,
                tol: float | None = None) -> VariationalState:
    """Solve the first transformed equation for xi at frozen zeta.

    Bounded domains delegate to the damped Newton solver.  On the torus the
    mean modes are slaved to the constraints by torus_mean_update after
    every sweep, which keeps the right side mean-free and the Jacobian
    solves well posed on the mean-free subspace.
    """
    settings = settings or SolverSettings()
    if tol is None:
        tol = settings.inner_tol
    out = state.copy()
    if problem.kind == "bounded":
        bg = problem.bg
        zeta = out.zeta

        def F(xi):
            Ea = _exp_guarded(bg.f0 + 0.5 * (xi + zeta))
            Eb = _exp_guarded(bg.g0 + 0.5 * (xi - zeta))
            return 4.0 * Ea + 4.0 * Eb - 8.0 + bg.h1 + bg.h2

        def dF(xi):
            Ea = _exp_guarded(bg.f0 + 0.5 * (xi + zeta))
            Eb = _exp_guarded(bg.g0 + 0.5 * (xi - zeta))
            return 2.0 * (Ea + Eb)

        ns = NewtonSettings(tol_residual=tol, max_iter=settings.max_inner)
        out.xi = semilinear_newton(problem.grid, F, dF, guess=out.xi,
                                   boundary_values=0.0, settings=ns)
        return out

    # torus: damped quasi-Newton on the mean-free component
    grid = problem.grid
    out.xi = out.xi - float(out.xi.mean())
    out.xibar, out.zetabar = torus_mean_update(problem, out.xi, out.zeta)
    r = inner_residual(problem, out)
    rnorm = float(np.abs(r).max())
    for _ in range(settings.max_inner):
        if rnorm <= tol:
            return out
        Ea, Eb = _exponentials(problem, out)
        D = 4.0 * (Ea + Eb)
        # inexact Newton: the correction only needs to beat the residual
        # contraction target, so a modest relative tolerance suffices
        delta = _solve_shifted_periodic(D, r, grid, rtol=1e-6)
        delta -= float(delta.mean())
        t = 1.0
        while t >= 1e-8:
            trial = VariationalState(out.xi + t * delta, out.zeta)
            trial.xibar, trial.zetabar = torus_mean_update(problem, trial.xi,
                                                           trial.zeta)
            r_try = inner_residual(problem, trial)
            rn_try = float(np.abs(r_try).max())
            if rn_try <= (1.0 - 0.25 * t) * rnorm:
                out, r, rnorm = trial, r_try, rn_try
                break
            t *= 0.5
        else:
            raise LineSearchStalled("torus inner Newton backtracking stalled")
    raise MaxIterExceeded("torus inner Newton iteration cap exceeded")


def reduced_functional(problem, zeta: np.ndarray,
                       settings: SolverSettings | None = None,
                       guess: VariationalState | None = None):
    """Evaluate the reduced functional at zeta: inner-solve, then I."""
    settings = settings or SolverSettings()
    if guess is None:
        state = VariationalState(np.zeros(problem.grid.shape), zeta.copy())
    else:
        state = VariationalState(guess.xi.copy(), zeta.copy(),
                                 guess.xibar, guess.zetabar)
    state = inner_solve(problem, state, settings)
    return functional_I(problem, state), state


# ---------------------------------------------------------------------------
# outer descent
# ---------------------------------------------------------------------------

def _precondition(problem, g: np.ndarray, shift: float) -> np.ndarray:
    """Apply (-Delta + shift)^{-1} as the descent metric."""
    grid = problem.grid
    if grid.kind == "periodic":
        from .elliptic import _symbol
        lam = -_symbol(grid) + shift
        d = np.fft.ifft2(np.fft.fft2(g) / lam).real
        return d - float(d.mean())
    lu = _lu_factor(grid, shift)
    return _assemble_full(lu.solve(g[grid.mask]), None, grid)


def nested_minimize(problem, settings: SolverSettings | None = None,
                    init: VariationalState | None = None
                    ) -> tuple[VariationalState, SolveReport]:
    """Minimize the reduced functional over zeta.

    Outer loop: preconditioned gradient descent with Barzilai-Borwein steps
    and Armijo backtracking on I; the descent direction is built from the
    outer residual field, which equals minus the reduced gradient.  Every
    accepted step re-enforces admissibility through inner_solve, so the
    functional history is nonincreasing (asserted) and termination is on
    the infinity norms of both residual fields.
    """
    settings = settings or SolverSettings()
    require_indefinite(problem.K)
    grid = problem.grid
    w = grid.cell_area
    report = SolveReport()

    if init is None:
        state = VariationalState(np.zeros(grid.shape), np.zeros(grid.shape))
    else:
        state = init.copy()
        if grid.kind == "periodic":
            state.zeta = state.zeta - float(state.zeta.mean())
    state = inner_solve(problem, state, settings)
    I_cur = functional_I(problem, state)
    res_out_field = outer_residual(problem, state)
    grad = -res_out_field  # nodal gradient of the reduced functional / w

    tau = 1.0
    prev_d = prev_grad = prev_step = None
    for k in range(settings.max_outer):
        res_in = float(np.abs(inner_residual(problem, state)).max())
        res_out = float(np.abs(res_out_field).max())
        report.iterations.append({"iter": k, "I": I_cur,
                                  "residual_inner": res_in,
                                  "residual_outer": res_out,
                                  "step": tau if k else 0.0})
        if max(res_in, res_out) <= settings.tol_outer:
            report.converged = True
            report.message = "converged"
            break

        d = _precondition(problem, grad, settings.precond_shift)
        if prev_d is not None:
            # BB1 step in the (-Delta + shift) metric; s = -step * prev_d
            num = prev_step ** 2 * float(np.sum(prev_d * prev_grad))
            den = -prev_step * float(np.sum(prev_d * (grad - prev_grad)))
            if np.isfinite(num) and np.isfinite(den) and den > 0.0 and num > 0.0:
                tau = min(max(num / den, 1e-6), 1e4)
            else:
                tau = min(2.0 * tau, 1e4)

        slope = w * float(np.sum(grad * d))  # directional derivative along +d
        assert slope >= 0.0
        # forcing-term inner tolerance: tight relative to the current outer
        # residual, floored at the final inner tolerance
        tol_dyn = max(settings.inner_tol, min(1e-3, 1e-2 * res_out))
        t = tau
        accepted = False
        while t >= settings.min_step:
            trial = VariationalState(state.xi.copy(), state.zeta - t * d,
                                     state.xibar, state.zetabar)
            if grid.kind == "periodic":
                trial.zeta -= float(trial.zeta.mean())
            try:
                trial = inner_solve(problem, trial, settings, tol=tol_dyn)
            except (MaxIterExceeded, LineSearchStalled):
                t *= 0.5
                continue
            I_try = functional_I(problem, trial)
            floor = 1e-12 * (1.0 + abs(I_cur))  # roundoff level of I
            if 1e-4 * t * slope > floor:
                ok = I_try <= I_cur - 1e-4 * t * slope
            else:
                # predicted decrease is below the roundoff of I; fall back
                # to accepting any step that does not measurably increase I
                ok = I_try <= I_cur + floor
            if ok:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise Stalled(
                f"outer step collapsed below {settings.min_step:g} with "
                f"residual {res_out:g} above tolerance")
        assert I_try <= I_cur + 1e-12 * (1.0 + abs(I_cur)), \
            "functional increased on an accepted step"
        prev_d, prev_grad, prev_step = d, grad, t
        state, I_cur = trial, I_try
        res_out_field = outer_residual(problem, state)
        grad = -res_out_field
    else:
        report.message = "iteration cap exceeded"

    report.residual_inner = float(np.abs(inner_residual(problem, state)).max())
    report.residual_outer = float(np.abs(outer_residual(problem, state)).max())
    report.functional = I_cur
    if not report.converged:
        if max(report.residual_inner, report.residual_outer) <= settings.tol_outer:
            report.converged = True
            report.message = "converged"
        elif not report.message:
            report.message = "not converged"
    return state, report


# ---------------------------------------------------------------------------
# mesh-continuation driver (torus)
# ---------------------------------------------------------------------------

def prolong_periodic(values: np.ndarray, n1_new: int, n2_new: int) -> np.ndarray:
    """Spectral interpolation of a periodic field onto a finer grid."""
    n1, n2 = values.shape
    assert n1_new >= n1 and n2_new >= n2
    f = np.fft.fft2(values)
    F = np.zeros((n1_new, n2_new), dtype=complex)
    k1, k2 = n1 // 2, n2 // 2
    F[:k1, :k2] = f[:k1, :k2]
    F[:k1, -k2:] = f[:k1, -k2:]
    F[-k1:, :k2] = f[-k1:, :k2]
    F[-k1:, -k2:] = f[-k1:, -k2:]
    return np.fft.ifft2(F).real * (n1_new * n2_new) / (n1 * n2)


def solve_torus(params: CouplingParams, vortices: VortexConfiguration,
                tau1: float, tau2: float, n1: int, n2: int,
                epsilon: float | None = None,
                settings: SolverSettings | None = None,
                coarsest: int = 64):
    """Full torus pipeline with mesh continuation.

    Solves on a hierarchy of grids (n/4, n/2, n as available, not below
    `coarsest` nodes per direction), spectrally prolonging each solution as
    the warm start of the next level.  epsilon defaults to (2h)^2 of the
    finest grid.  Returns (problem, state, report) at the finest level.
    """
    settings = settings or SolverSettings()
    if epsilon is None:
        epsilon = (2.0 * max(tau1 / n1, tau2 / n2)) ** 2
    levels = [(n1, n2)]
    while n1 % 2 == 0 and n2 % 2 == 0 and min(n1, n2) // 2 >= coarsest:
        n1, n2 = n1 // 2, n2 // 2
        levels.append((n1, n2))
    state = None
    for m1, m2 in reversed(levels):
        grid = Grid.torus(tau1, tau2, m1, m2)
        problem = make_torus_problem(params, vortices, grid, epsilon)
        init = None
        if state is not None:
            init = VariationalState(prolong_periodic(state.xi, m1, m2),
                                    prolong_periodic(state.zeta, m1, m2),
                                    state.xibar, state.zetabar)
        state, report = nested_minimize(problem, settings, init=init)
    return problem, state, report


# ---------------------------------------------------------------------------
# recovery of the physical fields
# ---------------------------------------------------------------------------

def recover_uv(problem, state: VariationalState) -> tuple[np.ndarray, np.ndarray]:
    """Undo the substitution chain and return the physical (u, v).

    Bounded: u = f0 + (xi+zeta)/2 - ln2 (so u = -ln2 on the boundary).
    Torus:   u = u0 + (xi~+zeta~)/2 + (xibar+zetabar)/2.
    """
    ln2 = math.log(2.0)
    if problem.kind == "bounded":
        u = problem.bg.f0 + 0.5 * (state.xi + state.zeta) - ln2
        v = problem.bg.g0 + 0.5 * (state.xi - state.zeta) - ln2
    else:
        u = (problem.bg.u0 + 0.5 * (state.xi + state.zeta)
             + 0.5 * (state.xibar + state.zetabar))
        v = (problem.bg.v0 + 0.5 * (state.xi - state.zeta)
             + 0.5 * (state.xibar - state.zetabar))
    return u, v


def system_residual(problem, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual fields of the original coupled system with regularized sources.

    Bounded: Delta u - (4 k11 e^u + 4 k12 e^v - 4 + bumps).
    Torus: the realized source is the mean-balanced bump field plus the
    neutralizing constant 4 pi N1/|Omega| (on a torus the equation is only
    solvable with that constant present).
    """
    K = problem.K
    g = problem.grid
    eu, ev = np.exp(u), np.exp(v)
    if problem.kind == "bounded":
        from .sources import regularized_delta_sum
        eps = problem.bg.epsilon
        su = regularized_delta_sum(problem.vortices.upper_points, eps, g)
        sv = regularized_delta_sum(problem.vortices.lower_points, eps, g)
    else:
        vc = problem.vortices
        su = problem.bg.src_u + 4.0 * math.pi * vc.N1 / problem.area
        sv = problem.bg.src_v + 4.0 * math.pi * vc.N2 / problem.area
    ru = laplacian_apply(u, g) - (4 * K.k11 * eu + 4 * K.k12 * ev - 4.0 + su)
    rv = laplacian_apply(v, g) - (4 * K.k12 * eu + 4 * K.k11 * ev - 4.0 + sv)
    if g.kind == "dirichlet":
        ru[~g.mask] = 0.0
        rv[~g.mask] = 0.0
    return ru, rv

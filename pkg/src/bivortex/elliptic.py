"""Discrete Laplacians and the linear/nonlinear elliptic solvers.

All operators use the standard 5-point stencil.  Periodic problems are
diagonalized by the FFT; Dirichlet problems (including masked disks) are
solved by conjugate gradients on the interior unknowns, preconditioned with
a cached sparse factorization of the shifted Laplacian.  On top of the
linear solves sit a damped Newton iteration for monotone semilinear
equations and the classical sub/supersolution sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (LineSearchStalled, MaxIterExceeded, MonotonicityViolated,
                     NonZeroMean)
from .grids import Grid

# shifts (di, dj) of the four stencil neighbors
_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class NewtonSettings:
    tol_residual: float = 1e-10   # infinity norm of Delta u - F(u)
    max_iter: int = 50
    min_step: float = 1e-6
    lin_rtol: float = 1e-12       # relative 2-norm target of Jacobian solves


# ---------------------------------------------------------------------------
# stencil application
# ---------------------------------------------------------------------------

def laplacian_apply(values: np.ndarray, grid: Grid) -> np.ndarray:
    """5-point discrete Laplacian.

    Periodic grids wrap; on Dirichlet grids the stencil uses the stored
    (pinned) neighbor values and the output is zeroed outside the mask.
    """
    h1i, h2i = 1.0 / grid.h1 ** 2, 1.0 / grid.h2 ** 2
    if grid.kind == "periodic":
        out = (np.roll(values, 1, 0) + np.roll(values, -1, 0)
               - 2.0 * values) * h1i
        out += (np.roll(values, 1, 1) + np.roll(values, -1, 1)
                - 2.0 * values) * h2i
        return out
    out = np.zeros_like(values)
    out[1:-1, 1:-1] = (
        (values[2:, 1:-1] + values[:-2, 1:-1] - 2.0 * values[1:-1, 1:-1]) * h1i
        + (values[1:-1, 2:] + values[1:-1, :-2] - 2.0 * values[1:-1, 1:-1]) * h2i)
    out[~grid.mask] = 0.0
    return out


# ---------------------------------------------------------------------------
# periodic (FFT) path
# ---------------------------------------------------------------------------

def _symbol(grid: Grid) -> np.ndarray:
    """Eigenvalues of the periodic 5-point Laplacian, mode (k1, k2)."""
    key = "symbol"
    if key not in grid._cache:
        s1 = -4.0 / grid.h1 ** 2 * np.sin(np.pi * np.fft.fftfreq(grid.n1)) ** 2
        s2 = -4.0 / grid.h2 ** 2 * np.sin(np.pi * np.fft.fftfreq(grid.n2)) ** 2
        grid._cache[key] = s1[:, None] + s2[None, :]
    return grid._cache[key]


def poisson_solve_periodic(rhs: np.ndarray, grid: Grid) -> np.ndarray:
    """Solve Delta u = rhs on the torus; rhs must be (discretely) mean-free.

    The output is normalized to mean zero and verified to reproduce rhs
    through the stencil to 1e-10 relative.
    """
    scale = max(1.0, float(np.abs(rhs).max()))
    if abs(float(rhs.mean())) > 1e-10 * scale:
        raise NonZeroMean("periodic Poisson right side has nonzero mean")
    lam = _symbol(grid).copy()
    lam[0, 0] = 1.0  # protected; the mean mode is zeroed below
    uhat = np.fft.fft2(rhs) / lam
    uhat[0, 0] = 0.0
    u = np.fft.ifft2(uhat).real
    # Delta u equals the mean-free part of rhs exactly up to FFT roundoff
    res = laplacian_apply(u, grid) - rhs
    assert np.abs(res - float(res.mean())).max() <= 1e-9 * scale
    u -= u.mean()
    return u


def _solve_shifted_periodic(D: np.ndarray, b: np.ndarray, grid: Grid,
                            rtol: float) -> np.ndarray:
    """Solve (-Delta + D) x = b, D >= 0 not identically 0, by PCG with an
    FFT preconditioner (-Delta + mean D)^{-1}."""
    dbar = max(float(D.mean()), 1e-14)
    lam = -_symbol(grid) + dbar

    def minv(r):
        return np.fft.ifft2(np.fft.fft2(r) / lam).real

    def matvec(x):
        return -laplacian_apply(x, grid) + D * x

    return _pcg(matvec, b, minv, np.zeros_like(b), rtol)


# ---------------------------------------------------------------------------
# Dirichlet (masked CG) path
# ---------------------------------------------------------------------------

def _dirichlet_ops(grid: Grid) -> dict:
    """Cached interior operator data for a Dirichlet grid.

    L is the negative Laplacian restricted to mask nodes (SPD).  Pinned
    neighbor values enter the right side through `boundary_term`.
    """
    if "dops" in grid._cache:
        return grid._cache["dops"]
    mask = grid.mask
    n1, n2 = grid.shape
    idx = -np.ones(grid.shape, dtype=np.int64)
    m = int(mask.sum())
    idx[mask] = np.arange(m)
    h1i, h2i = 1.0 / grid.h1 ** 2, 1.0 / grid.h2 ** 2
    rows = [np.arange(m)]
    cols = [np.arange(m)]
    vals = [np.full(m, 2.0 * (h1i + h2i))]
    ii, jj = np.nonzero(mask)
    for di, dj in _NEIGHBORS:
        ni, nj = ii + di, jj + dj
        w = h1i if dj == 0 else h2i
        nbr_in = mask[ni, nj]
        rows.append(idx[ii[nbr_in], jj[nbr_in]])
        cols.append(idx[ni[nbr_in], nj[nbr_in]])
        vals.append(np.full(int(nbr_in.sum()), -w))
    L = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m))
    ops = {"L": L, "idx": idx, "m": m, "ii": ii, "jj": jj}
    grid._cache["dops"] = ops
    return ops


def _boundary_term(bv: np.ndarray, grid: Grid) -> np.ndarray:
    """Interior vector collecting pinned-neighbor contributions of bv / h^2."""
    ops = _dirichlet_ops(grid)
    mask, idx = grid.mask, ops["idx"]
    ii, jj = ops["ii"], ops["jj"]
    t = np.zeros(ops["m"])
    for di, dj in _NEIGHBORS:
        ni, nj = ii + di, jj + dj
        w = 1.0 / grid.h1 ** 2 if dj == 0 else 1.0 / grid.h2 ** 2
        pinned = ~mask[ni, nj]
        np.add.at(t, idx[ii[pinned], jj[pinned]], w * bv[ni[pinned], nj[pinned]])
    return t


def _lu_factor(grid: Grid, shift: float):
    key = ("lu", float(shift))
    if key not in grid._cache:
        ops = _dirichlet_ops(grid)
        A = ops["L"] + shift * sp.identity(ops["m"], format="csr")
        grid._cache[key] = spla.splu(A.tocsc())
    return grid._cache[key]


def _assemble_full(x_int: np.ndarray, bv: np.ndarray | None, grid: Grid) -> np.ndarray:
    full = np.zeros(grid.shape) if bv is None else bv.copy()
    full[grid.mask] = x_int
    return full


def poisson_solve_dirichlet(rhs: np.ndarray, boundary_values, grid: Grid,
                            tol: float = 1e-10) -> np.ndarray:
    """Solve Delta u = rhs, u = boundary_values on pinned nodes.

    boundary_values may be a scalar or a full array (pinned entries used).
    Returns the full array including the pinned values.
    """
    if np.isscalar(boundary_values):
        bv = np.full(grid.shape, float(boundary_values))
    else:
        bv = boundary_values
    ops = _dirichlet_ops(grid)
    b = _boundary_term(bv, grid) - rhs[grid.mask]
    x = _lu_factor(grid, 0.0).solve(b)
    u = _assemble_full(x, bv, grid)
    res = laplacian_apply(u, grid) - np.where(grid.mask, rhs, 0.0)
    scale = max(1.0, float(np.abs(rhs).max()))
    if np.abs(res).max() > tol * scale:
        raise MaxIterExceeded("Dirichlet Poisson solve residual above tolerance")
    return u


def _solve_shifted_dirichlet(D_int: np.ndarray, b_int: np.ndarray, grid: Grid,
                             rtol: float, precond_shift: float = 4.0) -> np.ndarray:
    """Solve (L + diag(D)) x = b on the interior by PCG with a cached
    factorization of L + precond_shift*I as preconditioner."""
    ops = _dirichlet_ops(grid)
    L = ops["L"]
    lu = _lu_factor(grid, precond_shift)

    def matvec(x):
        return L @ x + D_int * x

    return _pcg(matvec, b_int, lu.solve, np.zeros_like(b_int), rtol)


# ---------------------------------------------------------------------------
# conjugate gradients
# ---------------------------------------------------------------------------

def _pcg(matvec, b, minv, x0, rtol, maxiter=2000):
    """Preconditioned CG with deterministic reductions (plain numpy sums)."""
    x = x0.copy()
    r = b - matvec(x)
    bnorm = float(np.sqrt(np.sum(b * b)))
    if bnorm == 0.0:
        return x
    z = minv(r)
    p = z.copy()
    rz = float(np.sum(r * z))
    for _ in range(maxiter):
        if float(np.sqrt(np.sum(r * r))) <= rtol * bnorm:
            return x
        Ap = matvec(p)
        alpha = rz / float(np.sum(p * Ap))
        x += alpha * p
        r -= alpha * Ap
        z = minv(r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise MaxIterExceeded("conjugate gradient iteration cap exceeded")


# ---------------------------------------------------------------------------
# semilinear Newton
# ---------------------------------------------------------------------------

def semilinear_newton(grid: Grid, F, dF, guess: np.ndarray | None = None,
                      boundary_values=0.0,
                      settings: NewtonSettings | None = None) -> np.ndarray:
    """Solve Delta u = F(u) for monotone F (dF = dF/du >= 0) by damped Newton.

    F and dF map the full nodal array to arrays of the same shape.  On
    Dirichlet grids the pinned values are held at boundary_values and the
    residual is measured on the mask.  Backtracking halves the step until
    the residual decreases (Armijo-style on the residual norm).
    """
    settings = settings or NewtonSettings()
    if guess is None:
        u = np.zeros(grid.shape)
    else:
        u = guess.copy()
    dirichlet = grid.kind == "dirichlet"
    if dirichlet:
        if np.isscalar(boundary_values):
            bv = np.full(grid.shape, float(boundary_values))
        else:
            bv = np.asarray(boundary_values, dtype=float)
        u[~grid.mask] = bv[~grid.mask]

    def residual(w):
        r = laplacian_apply(w, grid) - F(w)
        if dirichlet:
            r[~grid.mask] = 0.0
        return r

    r = residual(u)
    rnorm = float(np.abs(r).max())
    for _ in range(settings.max_iter):
        if rnorm <= settings.tol_residual:
            return u
        D = dF(u)
        assert np.all(D >= 0.0), "nonlinearity must be nondecreasing"
        # Newton correction: (-Delta + D) delta = r, then u <- u + t*delta
        if dirichlet:
            d_int = _solve_shifted_dirichlet(D[grid.mask], r[grid.mask], grid,
                                             settings.lin_rtol)
            delta = _assemble_full(d_int, None, grid)
        else:
            delta = _solve_shifted_periodic(D, r, grid, settings.lin_rtol)
        t = 1.0
        while t >= settings.min_step:
            u_try = u + t * delta
            r_try = residual(u_try)
            rn_try = float(np.abs(r_try).max())
            if rn_try <= (1.0 - 0.25 * t) * rnorm:
                u, r, rnorm = u_try, r_try, rn_try
                break
            t *= 0.5
        else:
            raise LineSearchStalled("Newton backtracking stalled")
    if rnorm <= settings.tol_residual:
        return u
    raise MaxIterExceeded("Newton iteration cap exceeded")


# ---------------------------------------------------------------------------
# monotone sub/supersolution sweep
# ---------------------------------------------------------------------------

def monotone_iteration(grid: Grid, subsolution: np.ndarray,
                       supersolution: np.ndarray, rhs_of_w,
                       boundary_values=0.0, c: float | None = None,
                       tol: float = 1e-10, max_sweeps: int = 20000,
                       callback=None) -> np.ndarray:
    """Monotone increasing scheme between an ordered (sub, super) pair.

    Each sweep solves (Delta - c) w_new = rhs_of_w(w) - c*w with the pinned
    boundary data, starting from the subsolution.  For the e^w-type right
    side, c = 8 exp(max supersolution) + 1 makes the map order preserving,
    so the iterates increase pointwise toward the solution; both bounds are
    asserted every sweep.
    """
    assert grid.kind == "dirichlet"
    assert np.all(subsolution[grid.mask] <= supersolution[grid.mask] + 1e-12)
    if c is None:
        c = 8.0 * float(np.exp(supersolution.max())) + 1.0
    if np.isscalar(boundary_values):
        bv = np.full(grid.shape, float(boundary_values))
    else:
        bv = np.asarray(boundary_values, dtype=float)
    lu = _lu_factor(grid, c)
    w = subsolution.copy()
    w[~grid.mask] = bv[~grid.mask]
    slack = 1e-12
    for sweep in range(max_sweeps):
        rhs = rhs_of_w(w)
        # (-Delta + c) w_new = c*w - rhs on the interior
        b = _boundary_term(bv, grid) + (c * w - rhs)[grid.mask]
        w_new = _assemble_full(lu.solve(b), bv, grid)
        lo = w[grid.mask] - slack * max(1.0, float(np.abs(w).max()))
        hi = supersolution[grid.mask] + slack
        if np.any(w_new[grid.mask] < lo) or np.any(w_new[grid.mask] > hi):
            raise MonotonicityViolated(
                f"sweep {sweep}: ordering broken (shift c too small?)")
        diff = float(np.abs(w_new - w).max())
        if callback is not None:
            callback(sweep, w, w_new)
        w = w_new
        if diff <= tol:
            return w
    raise MaxIterExceeded("monotone iteration cap exceeded")

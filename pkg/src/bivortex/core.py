"""Coupling matrix, regime classification, and closed-form constants.

The coupled system under study is

    Delta u = 4 k11 e^u + 4 k12 e^v - 4 + 4 pi sum_j delta_{p_j},
    Delta v = 4 k12 e^u + 4 k11 e^v - 4 + 4 pi sum_j delta_{q_j},

with k11 = (p+q)/p, k12 = (p-q)/p and det K = 4q/p < 0.  Everything in this
module is exact arithmetic on those constants: regime classification, the
doubly-periodic feasibility threshold, the constraint values (alpha, beta),
and the charge observables Q, Qtilde obtained by integrating the system.

Note that det K is a NEGATIVE number in the indefinite regimes; no absolute
value is ever taken.  Flipping its sign turns the problem coercive and
silently breaks every identity downstream, so the tests pin the sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError
from .grids import Grid


@dataclass(frozen=True)
class CouplingParams:
    """Raw coupling parameters; p > 0, q != 0."""
    p: float
    q: float

    def __post_init__(self):
        if not self.p > 0:
            raise ConfigError("coupling parameter p must be positive")
        if self.q == 0:
            raise ConfigError("q must be nonzero")


@dataclass(frozen=True)
class CouplingMatrix:
    k11: float
    k12: float
    detK: float


class Regime(Enum):
    INDEFINITE_A = "IndefiniteA"      # -4 <= detK < 0: full plane, torus, bounded
    INDEFINITE_B = "IndefiniteB"      # detK < -4: torus and bounded only
    POSITIVE_DEFINITE = "PositiveDefinite"  # detK > 0: out of scope
    DEGENERATE = "Degenerate"         # detK = 0: out of scope


def build_coupling(params: CouplingParams) -> CouplingMatrix:
    """Evaluate K = (1/p) [[p+q, p-q], [p-q, p+q]] and its determinant.

    The determinant is computed both as k11^2 - k12^2 and as 4q/p and the
    two are required to agree to 1e-12 relative.
    """
    p, q = params.p, params.q
    k11 = (p + q) / p
    k12 = (p - q) / p
    det_a = k11 * k11 - k12 * k12
    det_b = 4.0 * q / p
    assert abs(det_a - det_b) <= 1e-12 * max(1.0, abs(det_b)), \
        "determinant identity k11^2 - k12^2 = 4q/p violated"
    return CouplingMatrix(k11=k11, k12=k12, detK=det_b)


def classify_regime(K: CouplingMatrix) -> Regime:
    """Classify by the sign and magnitude of det K (total function)."""
    d = K.detK
    if d == 0.0:
        return Regime.DEGENERATE
    if d > 0.0:
        return Regime.POSITIVE_DEFINITE
    if d >= -4.0:
        # case 1: 1 < k12 <= 2 and 0 <= k11 < 1
        assert 1.0 < K.k12 <= 2.0 and 0.0 <= K.k11 < 1.0
        return Regime.INDEFINITE_A
    # case 2: k12 > 2 and k11 < 0
    assert K.k12 > 2.0 and K.k11 < 0.0
    return Regime.INDEFINITE_B


def require_indefinite(K: CouplingMatrix) -> Regime:
    """Gate used by the solvers: reject non-indefinite couplings loudly."""
    regime = classify_regime(K)
    if regime in (Regime.POSITIVE_DEFINITE, Regime.DEGENERATE):
        raise ConfigError(
            f"det K = {K.detK:g} is not negative; the positive-definite and "
            "degenerate regimes are outside the scope of this solver")
    return regime


@dataclass(frozen=True)
class VortexConfiguration:
    """Vortex point lists of the two layers; repetition encodes multiplicity."""
    upper_points: tuple = ()
    lower_points: tuple = ()
    N1: int = field(init=False)
    N2: int = field(init=False)
    Nplus: int = field(init=False)
    Nminus: int = field(init=False)

    def __post_init__(self):
        up = tuple((float(x), float(y)) for x, y in self.upper_points)
        lo = tuple((float(x), float(y)) for x, y in self.lower_points)
        object.__setattr__(self, "upper_points", up)
        object.__setattr__(self, "lower_points", lo)
        object.__setattr__(self, "N1", len(up))
        object.__setattr__(self, "N2", len(lo))
        object.__setattr__(self, "Nplus", len(up) + len(lo))
        object.__setattr__(self, "Nminus", len(up) - len(lo))

    def swapped(self) -> "VortexConfiguration":
        return VortexConfiguration(self.lower_points, self.upper_points)

    def merged(self) -> tuple:
        return self.upper_points + self.lower_points

    def validate_inside(self, grid: Grid) -> None:
        for pt in self.merged():
            if not grid.contains(pt):
                raise ConfigError(f"vortex point {pt} lies outside the domain")


@dataclass(frozen=True)
class DomainSpec:
    """Domain descriptor: kind in {'torus', 'disk', 'rectangle'} plus sizes."""
    kind: str
    tau1: float = 0.0
    tau2: float = 0.0
    R: float = 0.0
    Lx: float = 0.0
    Ly: float = 0.0

    @property
    def area(self) -> float:
        if self.kind == "torus":
            return self.tau1 * self.tau2
        if self.kind == "disk":
            return math.pi * self.R * self.R
        if self.kind == "rectangle":
            return self.Lx * self.Ly
        raise ConfigError(f"unknown domain kind {self.kind!r}")

    def make_grid(self, n1: int, n2: int) -> Grid:
        if self.kind == "torus":
            return Grid.torus(self.tau1, self.tau2, n1, n2)
        if self.kind == "disk":
            assert n1 == n2, "disk grids are square"
            return Grid.disk(self.R, n1)
        if self.kind == "rectangle":
            return Grid.rectangle(0.0, self.Lx, 0.0, self.Ly, n1, n2)
        raise ConfigError(f"unknown domain kind {self.kind!r}")


def threshold_area(params: CouplingParams, vortices: VortexConfiguration) -> float:
    """Minimal doubly-periodic cell size admitting a solution.

    Solvability requires |Omega| > (pi/2) (|p/q| |N-| + N+); this is exactly
    positivity of both constraint values alpha and beta.
    """
    return (math.pi / 2.0) * (abs(params.p / params.q) * abs(vortices.Nminus)
                              + vortices.Nplus)


def alpha_beta(area: float, params: CouplingParams,
               vortices: VortexConfiguration) -> tuple[float, float]:
    """Prescribed values of the two torus constraint integrals.

    alpha = |Omega|/2 - (pi/4) ((p/q) N- + N+)  for int e^{u0+u1},
    beta  = |Omega|/2 - (pi/4) (-(p/q) N- + N+) for int e^{v0+v1}.

    Feasibility (both positive) is equivalent to area > threshold_area.
    """
    assert area > 0
    r = params.p / params.q
    alpha = area / 2.0 - (math.pi / 4.0) * (r * vortices.Nminus + vortices.Nplus)
    beta = area / 2.0 - (math.pi / 4.0) * (-r * vortices.Nminus + vortices.Nplus)
    return alpha, beta


def is_feasible(area: float, params: CouplingParams,
                vortices: VortexConfiguration) -> bool:
    a, b = alpha_beta(area, params, vortices)
    return a > 0.0 and b > 0.0


def predicted_charges(params: CouplingParams,
                      vortices: VortexConfiguration) -> dict:
    """Closed-form charge predictions from integrating the system over R^2."""
    Q = -(math.pi / 2.0) * vortices.Nplus
    Qtilde = -(math.pi * params.p / (2.0 * params.q)) * vortices.Nminus
    return {"Q": Q, "Qtilde": Qtilde, "PhiCS": 2.0 * params.q * Qtilde}


def charge_observables(u_values: np.ndarray, v_values: np.ndarray, grid: Grid,
                       params: CouplingParams,
                       vortices: VortexConfiguration) -> dict:
    """Measured charge integrals of an approximate topological solution.

    Q      = int (e^u + e^v - 1) dx      (predicted -(pi/2) N+),
    Qtilde = int (e^u - e^v) dx          (predicted -(pi p / 2q) N-),
    PhiCS  = 2 q Qtilde.

    The density identification is e^u = |psi_up|^2, e^v = |psi_down|^2 with
    unit mean background density, so the far-field contribution of the
    integrands vanishes.
    """
    if u_values.shape != grid.shape or v_values.shape != grid.shape:
        raise ConfigError("field/grid shape mismatch in charge_observables")
    w = grid.cell_area
    if grid.kind == "dirichlet":
        sel = grid.mask
        eu, ev = np.exp(u_values[sel]), np.exp(v_values[sel])
    else:
        eu, ev = np.exp(u_values).ravel(), np.exp(v_values).ravel()
    Q = w * float(np.sum(eu + ev - 1.0))
    Qtilde = w * float(np.sum(eu - ev))
    out = {"Q": Q, "Qtilde": Qtilde, "PhiCS": 2.0 * params.q * Qtilde}
    out["predicted"] = predicted_charges(params, vortices)
    return out

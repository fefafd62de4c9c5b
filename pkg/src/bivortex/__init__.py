"""Numerical solver for an indefinitely coupled two-layer vortex system.

The model is the self-dual reduction of a bilayer quantum Hall setting: two
Liouville-type equations coupled through a symmetric matrix K with
det K < 0, with Dirac vortex sources in each layer.  The package provides
regularized sources, a nested constrained-minimization solver on tori and
bounded domains, continuation toward the full plane, and the diagnostic
identities (flux quantization, feasibility threshold, decay rates) that
make runs checkable.
"""

from .core import (CouplingMatrix, CouplingParams, DomainSpec, Regime,
                   VortexConfiguration, alpha_beta, build_coupling,
                   charge_observables, classify_regime, is_feasible,
                   predicted_charges, require_indefinite, threshold_area)
from .diagnostics import (IdentityReport, flux_identities, make_report,
                          max_principle_check, quadrature, threshold_sweep)
from .errors import (BivortexError, ConfigError, DiagnosticOverflow,
                     Infeasible, LineSearchStalled, MaxIterExceeded,
                     MonotonicityViolated, NonZeroMean, Stalled)
from .fullplane import (ContinuationSchedule, DecayFit, bellman_ode_solve,
                        decay_fit, domain_continuation, lambda_estimate,
                        phi_profile, single_equation_solve)
from .grids import Grid, ScalarField
from .sources import (background_fields, bounded_background,
                      regularized_delta_sum, torus_background)
from .variational import (SolveReport, SolverSettings, VariationalState,
                          functional_I, inner_residual, inner_solve,
                          make_bounded_problem, make_torus_problem,
                          nested_minimize, outer_residual, recover_uv,
                          solve_torus, system_residual)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

"""Robust Stackelberg control of the 1D heat equation.

A leader control steers the state to zero at the final time (penalized HUM
with conjugate gradient) while a follower solves a robust tracking problem
against the worst disturbance (saddle point of a quadratic functional, found
by fixed-point iteration on the coupled optimality system).  Four control
configurations are supported: distributed leader with boundary follower,
boundary leader with distributed follower, all-boundary with a weighted
follower cost, and a two-follower Nash arrangement.
"""

from .grids import (BoundarySet, BoundaryTrace, Region, SpaceTimeField,
                    SpatialGrid, TimeGrid)
from .heat import normal_derivative, solve_backward, solve_forward
from .products import (h10_inner, h10_norm, hminus1_norm, l2_boundary, l2_q,
                       l2_region)
from .scenario import (RobustParams, ScenarioConfig, make_initial, make_target,
                       validate_config)
from .saddle import (SaddleSolution, evaluate_functional, gateaux_check,
                     measure_contraction, solve_optimality, verify_saddle)
from .hum import (AdjointPair, HumResult, HumSettings, gradient_check,
                  gram_apply, hum_minimize, observability_probe, observation,
                  solve_adjoint)
from .weights import (AdmissibilityReport, Eta0, EtaBar, EtaPair, WeightSpec,
                      admissibility_check, alpha_xi, beta_weights, l_of_t,
                      rho_star, rho_star_inv_sq, section3_weights, target_weight)
from .config import ExperimentSpec, parse_config
from .runner import (RunReport, convergence_study, eps_sweep, probe_run,
                     run_experiment)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

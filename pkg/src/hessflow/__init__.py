"""Desk-scale numerical laboratory for parabolic Hessian-type flows.

The package solves flows of the form  u_t = F(lam[D2 u + chi]) - psi  (or
the exponential form  e^{u_t + psi} = F) on flat tori and boxes, and
certifies by dense sampling the structural facts the continuum estimates
lean on: operator concavity and monotonicity, cone geometry, gap
inequalities, subsolution slack, boundary barriers, and growth of the
monitored norms.
"""

from .cone_geometry import (GapCertificate, LiftedPoint,
                            ParabolicGapCertificate, normal_separation_margin,
                            segment_lift, support_cap_sample,
                            verify_concavity_gap, verify_parabolic_gap)
from .config import RunConfig, load_config, parse_config
from .errors import (ConeViolationError, ConfigError, ConstraintViolationError,
                     FormViolationError, HessflowError,
                     InvalidConfigurationError, StepFailureError,
                     SteadyStateTimeoutError)
from .flow import (FlowState, GridFunction, NewtonConfig, ProblemSpec,
                   Trajectory, constant_function, initial_state, rhs, solve,
                   steady_state, step_explicit, step_implicit,
                   suggested_explicit_dt)
from .grids import (BOX, PERIODIC, Grid, ScalarField, SymTensorField,
                    admissibility_check, field_eigenvalues, gradient_comps,
                    hessian_comps)
from .monitors import (MonitorOptions, MonitorRow, WeightParams,
                       blowup_detector, growth_fit, monitor_observer,
                       read_monitor_csv, record, time_derivative_bound_check,
                       weighted_gradient_peak, write_monitor_csv)
from .operators import (FAMILIES, LogOf, LogPartialSums, SigmaQuotient,
                        SigmaRoot, make_operator)
from .snapshot import read_snapshot, write_snapshot
from .structure import StructureReport, check_structure
from .subsolutions import (BarrierParams, LinearInTime, SubsolutionReport,
                           boundary_barrier, construct_linear_subsolution,
                           search_barrier_constants, verify_subsolution,
                           weighted_max_curvature)

__version__ = "0.1.0"

"""Limit cycles of dx/dt = g(t) x^3 + f(t) x^2 with degree-one trigonometric coefficients."""

__version__ = "0.1.0"

from .model import (AbelParams, HypothesisReport, NormalForm, TrigPoly, check_C1_C2,
                    classify_hypotheses, evaluate_trig, normal_form, reduce_to_normal_form)
from .integrator import (IntegratorConfig, Trajectory, VariationalResult, closed_form_return_map,
                         integrate, integrate_variational)
from .poincare import (CycleInventory, LimitCycle, ZeroOrbitClass, classify_zero_orbit,
                       find_limit_cycles, return_map)
from .structure import (CycleGeometry, GeometryViolation, WProfile, analyze_geometry,
                        compute_W_profile, second_derivative_loop)
from .continuation import (Branch, FoldEvent, WitnessResult, continue_in_q0,
                           find_three_cycle_witness, hopf_inventory, verify_empty_region, locate_fold)

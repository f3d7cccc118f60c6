"""Weak KAM solutions, critical values and action minimizers for particles on a circle."""

from .action import ActionReport, Curve, action, holder_check, lagrangian
from .geometry import LiftedConfig, Matching, ParticleConfig, apply_symmetry, canonicalize, config_dist, match, torus_dist
from .lax_oleinik import GridStateSpace, GridValueFunction, StepPlan, apply_T, apply_T_steps, argmin_step, build_space
from .potentials import PeriodicFunction, Potential, certify_bound, eval_potential, grad_potential
from .tonelli import dp_minimize, line_curve, minimize_action, tonelli_upper_bound
from .weak_kam import WeakKamSolution, calibrated_curve, check_domination, lipschitz_check, solve

__version__ = "0.1.0"

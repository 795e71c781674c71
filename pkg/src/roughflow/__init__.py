"""Pathwise solvers and unstable manifolds for semilinear rough evolution equations."""

from .controlled import (ControlledNorms, ControlledPath, CutoffConfig, cutoff_chi, cutoff_factor,
                         d_norm, holder_bound_gap, norms, remainder, solve_cutoff_radius)
from .driver import (RoughPath, TimeGrid, build_bm_lift, build_smooth_lift, chen_defect,
                     holder_norms, lift_function, pure_area_path, rough_metric, segment, shift)
from .errors import (ConfigError, ConvergenceError, GridMismatch, InvalidConfig, InvalidInput,
                     OutOfRange, ProjectionError, RoughflowError, StepUnderflow)
from .integrator import (compensated_sum, convolution_path, local_error_probe,
                         pooled_error_probe, rough_convolution)
from .manifold import (LPConfig, ManifoldGraph, build_manifold, gap_condition, invariance_defect,
                       lp_fixed_point)
from .nonlinearity import (CollocationNonlinearity, LinearNonlinearity, ModewiseNonlinearity,
                           TruncatedNonlinearity, ZeroNonlinearity)
from .solver import SolveConfig, cocycle_eval, solve_global, solve_local
from .spectral import SpectralOperator, interp_norm, preset_parabolic, semigroup_apply

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

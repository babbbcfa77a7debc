"""Omega-model toolkit: scale functions of spectrally negative Levy
processes with level-dependent bankruptcy rates, optimal dividend barriers,
and Monte Carlo validation."""

import os as _os

# the simulation fans out over paths only; the built-in thread pool is
# enough and skips probing optional TBB/OMP layers
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .control import (BarrierDiagnostics, BarrierSolution, barrier_value_at,
                      find_barrier, generator_apply, hjb_residual, value_at)
from .errors import ConfigError, NumericError
from .levy import (LevyModel, RootSet, laplace_exponent,
                   laplace_exponent_deriv, phi, psi_roots, reference_model)
from .mc import McConfig, McEstimate, simulate_value
from .omega import (BankruptcyRate, RatePiece, affine_family, from_pieces,
                    parisian, step_family)
from .scale import (ScaleBasis, W, Z, Z_deriv, Z_first_form, Z_second,
                    check_identity_W, check_identity_Z, laplace_residual,
                    scale_basis)
from .volterra import (ConvexityReport, OmegaScaleTable, SolverConfig,
                       H_prime, H_second, convexity_report, picard_kernels,
                       solve_H)

__version__ = "0.1.0"

__all__ = [
    "BankruptcyRate", "BarrierDiagnostics", "BarrierSolution", "ConfigError",
    "ConvexityReport", "LevyModel", "McConfig", "McEstimate", "NumericError",
    "OmegaScaleTable", "RatePiece", "RootSet", "ScaleBasis", "SolverConfig",
    "W", "Z", "Z_deriv", "Z_first_form", "Z_second", "affine_family",
    "barrier_value_at", "check_identity_W", "check_identity_Z",
    "convexity_report", "find_barrier", "from_pieces", "generator_apply",
    "H_prime", "H_second", "hjb_residual", "laplace_exponent",
    "laplace_exponent_deriv", "laplace_residual", "parisian", "phi",
    "psi_roots", "reference_model", "scale_basis", "simulate_value",
    "solve_H", "step_family", "value_at",
]

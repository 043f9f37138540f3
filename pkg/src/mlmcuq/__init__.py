"""Multilevel Monte Carlo uncertainty quantification for vector-valued QoIs.

Two multilevel models are built in: a manufactured model with closed-form
statistics and a Taylor-homogenized HCP crystal-plasticity polycrystal.
"""

__version__ = "0.1.0"

from .accumulator import LevelAccumulator
from .engine import (MLMCSettings, Sampler, compare_mc_mlmc, mc_estimate, run_adaptive_mlmc, run_mc)
from .estimators import (EstimatorReport, bias_estimate, mlmc_point_estimate, optimal_allocation)
from .manufactured import EXACT_MEAN, ManufacturedConfig, ManufacturedModel
from .model import (CoupledEvaluation, LevelHierarchy, ModelEvaluationError, MultilevelModel, SampleKey, delta,
                    evaluate_coupled)
from .qoi import QoIVector, StressStrainCurve, extract_qois, pchip_derivatives
from .screening import RateFit, ScreeningPolicy, correlation_profile, fit_rates, screen_levels

__all__ = [
    "LevelAccumulator", "MLMCSettings", "Sampler", "compare_mc_mlmc", "mc_estimate", "run_adaptive_mlmc",
    "run_mc", "EstimatorReport", "bias_estimate", "mlmc_point_estimate", "optimal_allocation", "EXACT_MEAN",
    "ManufacturedConfig", "ManufacturedModel", "CoupledEvaluation", "LevelHierarchy", "ModelEvaluationError",
    "MultilevelModel", "SampleKey", "delta", "evaluate_coupled", "QoIVector", "StressStrainCurve",
    "extract_qois", "pchip_derivatives", "RateFit", "ScreeningPolicy", "correlation_profile", "fit_rates",
    "screen_levels",
]

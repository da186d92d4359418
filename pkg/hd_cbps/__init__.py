"""
hd-cbps - High-Dimensional Covariate Balancing Propensity Score estimation

Estimates E{Y(1)}, E{Y(0)} and the average treatment effect from
observational data with many covariates:
- Penalized quasi-likelihood propensity fit with an L1 proximal solver
- Weighted LASSO / penalized GLM outcome regression on the treated
- Exact covariate balancing on the selected outcome support
- Horvitz-Thompson or augmented estimates with plug-in variance and
  normal confidence intervals
- Simulation harness for the AR(1) / Kang-Schafer benchmark scenarios
"""

__version__ = "0.1.0"
__author__ = "hd-cbps developers"

from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.estimate import EffectEstimate, estimate_ate, estimate_mu1
from hd_cbps.core.model import Dataset

__all__ = [
    "Dataset",
    "EstimatorConfig",
    "EffectEstimate",
    "estimate_ate",
    "estimate_mu1",
]

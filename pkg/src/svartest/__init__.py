"""Score tests for sparse high-dimensional vector autoregressions."""
from .chi2 import chi2_cdf, chi2_quantile, chi2_sf, noncentral_chi2_cdf
from .estimators import FitResult, fit
from .model import (
    LaggedSample,
    NoiseKind,
    TestSpec,
    UnstableModelError,
    VarModel,
    population_cov,
    simulate,
)
from .score import (
    ConfidenceRegion,
    TestReport,
    confidence_region,
    decorrelated_score,
    noncentrality,
    statistic_r_hat,
    statistic_u_hat,
    statistic_u_tilde,
)

__version__ = "0.1.0"

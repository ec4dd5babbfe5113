"""Distributional effects at regression discontinuities and kinks.

The package estimates how the whole outcome distribution changes at a
cutoff: a Wasserstein-type summary of the quantile effect curve, its
mean/heterogeneity split, an L-moment decomposition, and bootstrap-based
intervals and tests.
"""

__version__ = "0.1.0"

from .core_data import Dataset, Design, load_csv, validate, write_csv
from .effects import (
    EffectSummary,
    KinkEffectSummary,
    l_moment_decomposition,
    l_moments,
    shifted_legendre,
    summarize,
)
from .estimators import DistributionalRDD, DistributionalRKD
from .exceptions import DistDiscError
from .inference import multiplier_bootstrap, run_inference
from .locfit import FitConfig, Kernel
from .pipeline import estimate_kink, estimate_rdd
from .quantiles import QuantileCurve, invert_cdf, trim
from .simlab import DgpId, DgpSpec, dgp_sample, run_mc, true_effects

__all__ = [
    "Dataset", "Design", "load_csv", "validate", "write_csv",
    "EffectSummary", "KinkEffectSummary", "l_moment_decomposition", "l_moments",
    "shifted_legendre", "summarize",
    "DistributionalRDD", "DistributionalRKD", "DistDiscError",
    "multiplier_bootstrap", "run_inference", "FitConfig", "Kernel",
    "estimate_kink", "estimate_rdd", "QuantileCurve", "invert_cdf", "trim",
    "DgpId", "DgpSpec", "dgp_sample", "run_mc", "true_effects",
]

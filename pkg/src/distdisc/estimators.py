"""Estimator classes with a scikit-learn style interface.

``fit`` takes the running variable as ``X`` and the outcome as ``y``;
``predict`` evaluates the fitted quantile-effect curve at quantile levels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_fraction,
    check_optional_column,
    check_outcome,
    check_quantile_levels,
    check_running_variable,
)
from .core_data import Dataset, Design
from .effects import FIRST_STAGE_TOL
from .inference import DEFAULT_B, DEFAULT_MC_DRAWS, run_inference
from .locfit import FitConfig, default_bandwidth, default_u_grid, default_y_grid
from .pipeline import estimate_kink, estimate_rdd


class _DistributionalBase(BaseEstimator):
    def _config(self, x, y):
        check_fraction(self.trim, "trim", 0.0, 0.5)
        if self.bandwidth is not None:
            h = float(self.bandwidth)
        else:
            h = default_bandwidth(x, self.bandwidth_constant)
        return FitConfig(
            cutoff=float(self.cutoff),
            bandwidth=h,
            order=int(self.order),
            kernel=self.kernel,
            y_grid=default_y_grid(y, int(self.n_y)),
            u_grid=default_u_grid(int(self.n_u)),
            trim=float(self.trim),
        )

    def _curve(self):
        raise NotImplementedError

    def predict(self, u):
        """Effect curve at quantile levels ``u`` (linear interpolation on the grid)."""
        check_is_fitted(self, "result_")
        u = check_quantile_levels(u)
        curve = self._curve()
        return np.interp(u, curve.u_grid, curve.values)

    def infer(self, B=DEFAULT_B, alpha=0.05, seed=0, B_mc=DEFAULT_MC_DRAWS, beta=2.0):
        """Bootstrap-based intervals and tests; stored in ``inference_``."""
        check_is_fitted(self, "result_")
        check_fraction(alpha, "alpha", 0.0, 1.0, closed_low=False)
        self.inference_ = run_inference(self.result_, B=B, B_mc=B_mc, alpha=alpha, seed=seed, beta=beta)
        return self.inference_


class DistributionalRDD(_DistributionalBase):
    """Wasserstein and quantile effects at a (sharp or fuzzy) discontinuity.

    Parameters
    ----------
    cutoff : float, default=0.0
    fuzzy : bool, default=False
        Use complier distributions from local Wald ratios; requires
        ``treatment`` in :meth:`fit`.
    order : int, default=2
        Local polynomial order of the CDF fits.
    kernel : str, default="triangular"
    bandwidth : float, optional
        Fixed bandwidth.  Otherwise ``c * n^(-1/5)``.
    bandwidth_constant : float, optional
        ``c`` in the bandwidth rule; defaults to the standard deviation of ``X``.
    trim : float, default=0.0
        Quantile levels outside ``[trim, 1 - trim]`` are dropped.
    n_y, n_u : int
        Sizes of the outcome and quantile-level grids.
    n_lmoments : int, default=10
    bias_correction : bool, default=True
    first_stage_tol : float, default=0.02

    Attributes
    ----------
    result_ : RddResult
    summary_ : EffectSummary
    psi_, tau_, gamma_, rho_ : float
    bandwidth_ : float
    """

    def __init__(self, cutoff=0.0, fuzzy=False, order=2, kernel="triangular", bandwidth=None,
                 bandwidth_constant=None, trim=0.0, n_y=401, n_u=999, n_lmoments=10,
                 bias_correction=True, first_stage_tol=FIRST_STAGE_TOL):
        self.cutoff = cutoff
        self.fuzzy = fuzzy
        self.order = order
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.bandwidth_constant = bandwidth_constant
        self.trim = trim
        self.n_y = n_y
        self.n_u = n_u
        self.n_lmoments = n_lmoments
        self.bias_correction = bias_correction
        self.first_stage_tol = first_stage_tol

    def fit(self, X, y, treatment=None):
        x = check_running_variable(X)
        y = check_outcome(y, x)
        a = check_optional_column(treatment, x, "treatment", binary=True)
        design = Design.FUZZY_RDD if self.fuzzy else Design.SHARP_RDD
        d = Dataset(x, y, self.cutoff, design, a=a)
        cfg = self._config(x, y)
        self.result_ = estimate_rdd(d, cfg, int(self.n_lmoments), fuzzy=bool(self.fuzzy),
                                    bias_correction=self.bias_correction,
                                    first_stage_tol=self.first_stage_tol)
        s = self.result_.summary
        self.summary_ = s
        self.psi_, self.tau_, self.gamma_, self.rho_ = s.psi, s.tau, s.gamma, s.rho
        self.bandwidth_ = cfg.bandwidth
        self.n_features_in_ = 1
        return self

    def _curve(self):
        return self.result_.dq


class DistributionalRKD(_DistributionalBase):
    """Quantile-slope and Wasserstein-derivative effects at a kink.

    Parameters are as in :class:`DistributionalRDD`, plus

    benefit_slopes : (float, float), optional
        Declared left/right slopes of the benefit rule (sharp kinks).
    fuzzy : bool, default=False
        Estimate the first stage from the observed ``benefit`` column.
    """

    def __init__(self, cutoff=0.0, fuzzy=False, benefit_slopes=None, order=2, kernel="triangular",
                 bandwidth=None, bandwidth_constant=None, trim=0.0, n_y=401, n_u=999,
                 n_lmoments=10, bias_correction=True, first_stage_tol=FIRST_STAGE_TOL):
        self.cutoff = cutoff
        self.fuzzy = fuzzy
        self.benefit_slopes = benefit_slopes
        self.order = order
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.bandwidth_constant = bandwidth_constant
        self.trim = trim
        self.n_y = n_y
        self.n_u = n_u
        self.n_lmoments = n_lmoments
        self.bias_correction = bias_correction
        self.first_stage_tol = first_stage_tol

    def fit(self, X, y, benefit=None):
        x = check_running_variable(X)
        y = check_outcome(y, x)
        t = check_optional_column(benefit, x, "benefit")
        design = Design.FUZZY_KINK if self.fuzzy else Design.SHARP_KINK
        d = Dataset(x, y, self.cutoff, design, t=t, benefit_slopes=self.benefit_slopes)
        cfg = self._config(x, y)
        self.result_ = estimate_kink(d, cfg, int(self.n_lmoments),
                                     first_stage_tol=self.first_stage_tol,
                                     bias_correction=self.bias_correction)
        s = self.result_.summary
        self.summary_ = s
        self.psi_, self.tau_, self.gamma_, self.rho_ = s.psi_prime, s.tau_prime, s.gamma, s.rho
        self.first_stage_ = self.result_.first_stage
        self.bandwidth_ = cfg.bandwidth
        self.n_features_in_ = 1
        return self

    def _curve(self):
        return self.result_.dq_prime

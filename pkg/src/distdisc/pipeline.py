"""End-to-end point estimation for the four designs.

The functions here glue the local polynomial engine, CDF repair and
inversion, and the estimands together, keeping the intermediate objects
that the bootstrap needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_data import Dataset, Design
from .effects import (
    FIRST_STAGE_TOL,
    EffectSummary,
    KinkEffectSummary,
    QuantileCurve,
    check_first_stage,
    fuzzy_complier_cdfs,
    kink_effects,
    kink_quantile_slope_curve,
    quantile_effect_curve,
    summarize,
)
from .locfit import (
    CdfFit,
    DensityFit,
    FitConfig,
    bias_correct,
    bias_correct_mean,
    default_density_bandwidth,
    density_floor,
    fit_conditional_density,
    fit_local_cdf,
    fit_local_mean,
)
from .quantiles import invert_cdf, monotonize, trim


def _treated(d):
    return d.treatment


def _untreated(d):
    return 1.0 - d.treatment


@dataclass(frozen=True)
class RddResult:
    """Point estimates and intermediate curves of a (fuzzy) discontinuity fit."""

    dataset: Dataset
    config: FitConfig
    fuzzy: bool
    bias_corrected: bool
    summary: EffectSummary
    q1: QuantileCurve
    q0: QuantileCurve
    dq: QuantileCurve
    cdf1: np.ndarray  # repaired CDF of treated outcomes on the y-grid
    cdf0: np.ndarray
    density1: np.ndarray  # outcome densities on the y-grid, floored
    density0: np.ndarray
    first_stage: float
    tau_mean: float
    raw_cdf_range: tuple[float, float]
    h_y: float
    extras: dict = field(default_factory=dict)

    @property
    def nh(self):
        return self.dataset.n * self.config.bandwidth


@dataclass(frozen=True)
class KinkResult:
    dataset: Dataset
    config: FitConfig
    fuzzy: bool
    summary: KinkEffectSummary
    q_pooled: QuantileCurve
    dq_prime: QuantileCurve
    cdf_right: CdfFit
    cdf_left: CdfFit
    density: DensityFit
    first_stage: float
    tau_mean: float
    extras: dict = field(default_factory=dict)

    @property
    def nh3(self):
        return self.dataset.n * self.config.bandwidth**3


def _cdf(d, side, cfg, rule, bias):
    fit = fit_local_cdf(d, side, cfg, subset_rule=rule)
    return bias_correct(fit, cfg, d, rule) if bias else fit


def _mean(d, side, cfg, rule, bias):
    fit = fit_local_mean(d, side, cfg, rule)
    return bias_correct_mean(fit, cfg, d, rule) if bias else fit


# The kink density keeps the local-linear fit; order 2 is too noisy at the boundary.
DENSITY_ORDER = 1


def cdf_density(cdf, y_grid, h_y):
    """Centred difference ``(F(y + h_y) - F(y - h_y)) / (2 h_y)`` of a repaired CDF.

    Nonnegative by construction, which keeps the quantile map of the
    bootstrap stable in small windows.
    """
    up = np.interp(y_grid + h_y, y_grid, cdf)
    down = np.interp(y_grid - h_y, y_grid, cdf)
    return (up - down) / (2.0 * h_y)


def _check_grids(cfg):
    if cfg.y_grid is None or cfg.u_grid is None:
        raise ValueError("FitConfig needs both y_grid and u_grid")


def estimate_rdd(d: Dataset, cfg: FitConfig, K=10, fuzzy=None, bias_correction=True,
                 first_stage_tol=FIRST_STAGE_TOL) -> RddResult:
    """Distributional discontinuity estimates for sharp or fuzzy designs.

    With ``fuzzy`` unset the dataset's design decides.  The fuzzy path
    works on complier CDFs from local Wald ratios and reduces exactly to
    the sharp path when treatment follows the cutoff rule.
    """
    _check_grids(cfg)
    if fuzzy is None:
        fuzzy = d.design is Design.FUZZY_RDD
    bias = bias_correction
    window = np.abs(d.x - cfg.cutoff) <= cfg.bandwidth
    h_y = default_density_bandwidth(d.y[window])
    floor = density_floor(d.y)

    if fuzzy:
        pi_r = _mean(d, "right", cfg, _treated, bias)
        pi_l = _mean(d, "left", cfg, _treated, bias)
        jump = check_first_stage(pi_r.value - pi_l.value, first_stage_tol)
        comp = fuzzy_complier_cdfs(
            _cdf(d, "right", cfg, _treated, bias),
            _cdf(d, "left", cfg, _treated, bias),
            _cdf(d, "right", cfg, _untreated, bias),
            _cdf(d, "left", cfg, _untreated, bias),
            pi_r, pi_l, first_stage_tol,
        )
        raw1, raw0, raw_range = comp.treated, comp.untreated, comp.raw_range
        y_r = _mean(d, "right", cfg, "y", bias).value
        y_l = _mean(d, "left", cfg, "y", bias).value
        tau_mean = (y_r - y_l) / jump
    else:
        jump = 1.0
        raw1 = _cdf(d, "right", cfg, None, bias).value
        raw0 = _cdf(d, "left", cfg, None, bias).value
        raw_range = (float(min(raw1.min(), raw0.min())), float(max(raw1.max(), raw0.max())))
        tau_mean = _mean(d, "right", cfg, "y", bias).value - _mean(d, "left", cfg, "y", bias).value

    cdf1, cdf0 = monotonize(raw1), monotonize(raw0)
    dens1 = cdf_density(cdf1, cfg.y_grid, h_y)
    dens0 = cdf_density(cdf0, cfg.y_grid, h_y)
    q1 = trim(invert_cdf(cdf1, cfg.u_grid, cfg.y_grid, role="Q1"), cfg.trim)
    q0 = trim(invert_cdf(cdf0, cfg.u_grid, cfg.y_grid, role="Q0"), cfg.trim)
    dq = quantile_effect_curve(q1, q0)
    summary = summarize(dq, K, design=d.design.value)
    extras = {
        "tau_mean": float(tau_mean),
        "r2_1_mean_plugin": (tau_mean**2 / summary.psi**2) if summary.psi > 0 else float("nan"),
        "saturated_levels": int(np.count_nonzero(q1.saturated) + np.count_nonzero(q0.saturated)),
    }
    summary = EffectSummary(**{**summary.__dict__, "extras": extras})
    return RddResult(
        dataset=d, config=cfg, fuzzy=bool(fuzzy), bias_corrected=bool(bias), summary=summary,
        q1=q1, q0=q0, dq=dq, cdf1=cdf1, cdf0=cdf0,
        density1=np.maximum(dens1, floor), density0=np.maximum(dens0, floor),
        first_stage=float(jump), tau_mean=float(tau_mean), raw_cdf_range=raw_range,
        h_y=float(h_y), extras=extras,
    )


def kink_first_stage(d: Dataset, cfg: FitConfig, benefit_slopes=None):
    """Slope change of the benefit rule at the cutoff.

    Declared slopes ``(left, right)`` take precedence; otherwise the
    one-sided slopes of a local polynomial fit of ``t`` are differenced.
    """
    slopes = benefit_slopes if benefit_slopes is not None else d.benefit_slopes
    if slopes is not None and d.design is not Design.FUZZY_KINK:
        return float(slopes[1] - slopes[0]), "declared"
    if d.t is None:
        raise ValueError("kink first stage needs declared slopes or a t column")
    right = fit_local_mean(d, "right", cfg, "t")
    left = fit_local_mean(d, "left", cfg, "t")
    return float(right.slope - left.slope), "estimated"


def estimate_kink(d: Dataset, cfg: FitConfig, K=10, benefit_slopes=None,
                  first_stage_tol=FIRST_STAGE_TOL, bias_correction=True) -> KinkResult:
    """Distributional kink estimates (sharp or fuzzy).

    The pooled quantile ``Q(u | cutoff)`` inverts the average of the two
    one-sided intercepts, and the outcome density at the cutoff averages
    the two one-sided density fits.
    """
    _check_grids(cfg)
    first_stage, source = kink_first_stage(d, cfg, benefit_slopes)
    check_first_stage(first_stage, first_stage_tol)
    right = fit_local_cdf(d, "right", cfg)
    left = fit_local_cdf(d, "left", cfg)
    if bias_correction:
        level_r = bias_correct(right, cfg, d).value
        level_l = bias_correct(left, cfg, d).value
    else:
        level_r, level_l = right.value, left.value
    pooled = monotonize(0.5 * (level_r + level_l))
    q_pooled = trim(invert_cdf(pooled, cfg.u_grid, cfg.y_grid, role="Q"), cfg.trim)
    density = fit_conditional_density(d, cfg, order=DENSITY_ORDER)
    dq_prime = kink_quantile_slope_curve(right, left, density, first_stage, q_pooled, first_stage_tol)
    mean_r = fit_local_mean(d, "right", cfg, "y")
    mean_l = fit_local_mean(d, "left", cfg, "y")
    tau_mean = (mean_r.slope - mean_l.slope) / first_stage
    extras = {"tau_mean": float(tau_mean), "first_stage_source": source}
    summary = kink_effects(dq_prime, first_stage, K, design=d.design.value, extras=extras)
    return KinkResult(
        dataset=d, config=cfg, fuzzy=d.design is Design.FUZZY_KINK, summary=summary,
        q_pooled=q_pooled, dq_prime=dq_prime, cdf_right=right, cdf_left=left,
        density=density, first_stage=first_stage, tau_mean=float(tau_mean), extras=extras,
    )


def describe_window(d: Dataset, cfg: FitConfig):
    """Counts of observations inside the bandwidth on each side."""
    inside = np.abs(d.x - cfg.cutoff) <= cfg.bandwidth
    return {
        "left": int(np.count_nonzero(inside & d.left)),
        "right": int(np.count_nonzero(inside & d.right)),
        "nh": float(d.n * cfg.bandwidth),
        "h": float(cfg.bandwidth),
        "sqrt_nh": math.sqrt(d.n * cfg.bandwidth),
    }

"""Multiplier bootstrap, confidence intervals for the squared distance, and tests.

Bootstrap draws linearize the whole estimator.  Every one-sided local
polynomial level (or slope) is an exact linear combination
``sum_i l_i * response_i`` of the responses in its window, so perturbing
the centred responses with i.i.d. standard normal multipliers and pushing
the result through the quantile map gives draws of the scaled
quantile-effect process.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .core_data import Dataset
from .exceptions import (
    BadDecayParam,
    DegenerateSpectrum,
    SmallBootstrapWarning,
    TruncationSensitivityWarning,
)
from .locfit import FitConfig, equivalent_weights, fit_local_cdf, fit_local_mean
from .pipeline import KinkResult, RddResult, estimate_kink, estimate_rdd
from .quantiles import curve_weights

DEFAULT_B = 1000
DEFAULT_MC_DRAWS = 100_000
_BLOCK = 64


@dataclass(frozen=True)
class BootstrapEnsemble:
    """Replicated draws of the scaled effect process on the (trimmed) u-grid.

    ``draws[b]`` approximates ``sqrt(scale) * (dQ* - dQ_hat)``; ``scale``
    is ``n h`` for discontinuities and ``n h^3`` for kinks.
    """

    draws: np.ndarray
    u_grid: np.ndarray
    weights: np.ndarray
    center: np.ndarray
    scale: float
    seed: int
    psi2_draws: np.ndarray
    kind: str = "rdd"

    @property
    def B(self):
        return self.draws.shape[0]

    @property
    def s_hat(self):
        """Bootstrap standard deviation of the squared-distance estimate."""
        return float(np.std(self.psi2_draws, ddof=1))


@dataclass(frozen=True)
class CovKernelEstimate:
    u_grid: np.ndarray
    matrix: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray

    @property
    def count(self):
        return int(np.count_nonzero(self.values > 0))


@dataclass(frozen=True)
class IntervalResult:
    lo: float
    hi: float
    estimate: float
    alpha: float
    method: str
    details: dict = field(default_factory=dict)

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, value):
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class TestResult:
    statistic: float
    critical: float
    alpha: float
    rejected: bool
    method: str
    details: dict = field(default_factory=dict)


# bootstrap -------------------------------------------------------------------

def _replicate_normals(seed, b, size):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(b)])).standard_normal(size)


def _below(y, points):
    return (y[:, None] <= points[None, :]).astype(float)


class _Influence:
    """Accumulates per-observation contributions to a process on the u-grid."""

    def __init__(self, n_u):
        self.n_u = n_u
        self.parts = []

    def add(self, index, contrib):
        self.parts.append((index, contrib))

    def matrix(self):
        union = np.unique(np.concatenate([p[0] for p in self.parts]))
        out = np.zeros((union.shape[0], self.n_u))
        for index, contrib in self.parts:
            out[np.searchsorted(union, index)] += contrib
        return union, out


def _arm_contributions(d, cfg, side, share, fc_values, points, y_index, bias):
    """Linearized contributions of one side to a (complier) CDF numerator.

    Returns the window index and a matrix of
    ``l_i [s_i I(Y_i <= y) - r_i'g(y) - F(y) (s_i - r_i'b)]`` at the points.
    """
    idx, lw, design = equivalent_weights(d, side, cfg, bias_corrected=bias)
    s = share[idx]
    fit = fit_local_cdf(d, side, cfg, subset_rule=share)
    g = fit.coeffs[y_index]  # (n_u, p+1)
    resid = s[:, None] * _below(d.y[idx], points) - design @ g.T
    if fc_values is not None:
        beta = fit_local_mean(d, side, cfg, share).coeffs
        resid -= (s - design @ beta)[:, None] * fc_values[None, :]
    return idx, lw[:, None] * resid


def _rdd_influence(r: RddResult):
    d, cfg = r.dataset, r.config
    fuzzy = r.fuzzy
    treat = d.treatment
    arms = [
        (r.q1, r.density1, treat, r.first_stage, r.cdf1),
        (r.q0, r.density0, 1.0 - treat, -r.first_stage, r.cdf0),
    ]
    acc = _Influence(r.dq.u_grid.shape[0])
    for sign_arm, (q, dens, share, denom, cdf) in zip((1.0, -1.0), arms):
        if not fuzzy:
            # sharp arms come from a single side with no subsetting
            share = np.ones(d.n)
            sides = (("right", 1.0),) if sign_arm > 0 else (("left", 1.0),)
            denom = 1.0
        else:
            sides = (("right", 1.0), ("left", -1.0))
        points = cfg.y_grid[q.y_index]
        fc = cdf[q.y_index] if fuzzy else None
        factor = -sign_arm / (denom * dens[q.y_index])
        for side, side_sign in sides:
            idx, contrib = _arm_contributions(d, cfg, side, share, fc, points, q.y_index, r.bias_corrected)
            acc.add(idx, side_sign * contrib * factor[None, :])
    return acc.matrix()


def _kink_influence(r: KinkResult):
    d, cfg = r.dataset, r.config
    q = r.q_pooled
    points = cfg.y_grid[q.y_index]
    near = np.abs(cfg.y_grid[:, None] - points[None, :]).argmin(axis=0)
    factor = -1.0 / (r.first_stage * r.density.values[near])
    acc = _Influence(q.u_grid.shape[0])
    estimated = r.extras.get("first_stage_source") == "estimated"
    for side, side_sign in (("right", 1.0), ("left", -1.0)):
        idx, lw, design = equivalent_weights(d, side, cfg, deriv=1)
        coeffs = (r.cdf_right if side == "right" else r.cdf_left).coeffs[near]
        resid = _below(d.y[idx], points) - design @ coeffs.T
        contrib = side_sign * lw[:, None] * resid * factor[None, :]
        if estimated:
            beta = fit_local_mean(d, side, cfg, "t").coeffs
            t_resid = d.t[idx] - design @ beta
            contrib -= side_sign * (lw * t_resid)[:, None] * (r.dq_prime.values / r.first_stage)[None, :]
        acc.add(idx, contrib)
    return acc.matrix()


def multiplier_bootstrap(fit, cfg: FitConfig | None = None, B=DEFAULT_B, seed=0) -> BootstrapEnsemble:
    """Multiplier bootstrap of the quantile-effect (or slope-effect) process.

    Parameters
    ----------
    fit : RddResult, KinkResult or Dataset
        A fitted result, or a dataset to be fitted with ``cfg``.
    B : int
        Number of replicates.  Replicate ``b`` draws its multipliers from
        its own stream seeded by ``(seed, b)``.
    """
    if isinstance(fit, Dataset):
        if cfg is None:
            raise ValueError("cfg is required when bootstrapping a raw dataset")
        fit = estimate_kink(fit, cfg) if fit.design.is_kink else estimate_rdd(fit, cfg)
    if B < 2:
        raise ValueError("B must be at least 2")
    if isinstance(fit, KinkResult):
        union, mat = _kink_influence(fit)
        curve, scale, kind = fit.dq_prime, fit.nh3, "kink"
    else:
        union, mat = _rdd_influence(fit)
        curve, scale, kind = fit.dq, fit.nh, "rdd"
    root = math.sqrt(scale)
    mat *= root
    draws = np.empty((B, curve.u_grid.shape[0]))
    for start in range(0, B, _BLOCK):
        stop = min(start + _BLOCK, B)
        xi = np.vstack([_replicate_normals(seed, b, union.shape[0]) for b in range(start, stop)])
        draws[start:stop] = xi @ mat
    w = curve_weights(curve)
    psi2 = ((curve.values[None, :] + draws / root) ** 2) @ w
    return BootstrapEnsemble(draws, curve.u_grid, w, curve.values.copy(), float(scale), int(seed), psi2, kind)


# intervals -------------------------------------------------------------------

def sup_band_quantile(e: BootstrapEnsemble, alpha=0.05):
    """Empirical ``1 - alpha`` quantile of ``sup_u |draw_b(u)|``."""
    if e.B < 100:
        warnings.warn(f"only {e.B} bootstrap replicates; band quantile is unstable",
                      SmallBootstrapWarning, stacklevel=2)
    sups = np.max(np.abs(e.draws), axis=1)
    return float(np.quantile(sups, 1 - alpha))


def band_interval_psi2(dq, c_hat, nh, alpha=0.05) -> IntervalResult:
    """Interval for the squared distance from a uniform band around ``dq``.

    With ``a, b = dq -/+ c_hat / sqrt(nh)`` the upper envelope is
    ``max(a^2, b^2)`` and the lower ``max(a, 0)^2 + min(b, 0)^2``.
    """
    half = c_hat / math.sqrt(nh)
    a = dq.values - half
    b = dq.values + half
    upper = np.maximum(a**2, b**2)
    lower = np.maximum(a, 0.0) ** 2 + np.minimum(b, 0.0) ** 2
    w = curve_weights(dq)
    est = float(w @ dq.values**2)
    return IntervalResult(
        float(w @ lower), float(w @ upper), est, alpha, "band",
        {"c_hat": float(c_hat), "band_lo": a, "band_hi": b},
    )


def _symmetric_interval(est, s_hat, c_const, scale, alpha, method):
    z = stats.norm.ppf(1 - alpha / 2)
    half = z * math.sqrt(s_hat**2 + c_const**2 / scale)
    return IntervalResult(max(est - half, 0.0), est + half, est, alpha, method,
                          {"half_width": half, "s_hat": s_hat, "c_const": c_const})


def conservative_interval(psi2_hat, s_hat, c_const, nh, alpha=0.05) -> IntervalResult:
    """``psi2_hat -/+ z sqrt(s_hat^2 + c^2 / (n h))``, floored at zero."""
    if s_hat < 0 or nh <= 0:
        raise ValueError("need s_hat >= 0 and nh > 0")
    return _symmetric_interval(psi2_hat, s_hat, c_const, nh, alpha, "conservative")


def kink_conservative_interval(psi_prime2_hat, s_hat, c_const, n, h, alpha=0.05) -> IntervalResult:
    """Kink analogue of :func:`conservative_interval` with ``n h^3`` scaling."""
    if s_hat < 0 or n <= 0 or h <= 0:
        raise ValueError("need s_hat >= 0, n > 0 and h > 0")
    return _symmetric_interval(psi_prime2_hat, s_hat, c_const, n * h**3, alpha, "kink-conservative")


# covariance kernel and tests -------------------------------------------------

def estimate_cov_kernel(e: BootstrapEnsemble) -> CovKernelEstimate:
    cov = np.cov(e.draws, rowvar=False)
    cov = 0.5 * (cov + cov.T)
    return CovKernelEstimate(e.u_grid, cov, e.weights)


def eigen_spectrum(k: CovKernelEstimate) -> Spectrum:
    """Eigenvalues of the quadrature-discretized covariance operator."""
    root = np.sqrt(k.weights)
    sym = root[:, None] * k.matrix * root[None, :]
    vals = linalg.eigvalsh(0.5 * (sym + sym.T))[::-1]
    return Spectrum(np.clip(vals, 0.0, None))


def choose_truncation(r_n, beta=2.0, cap=None):
    """``K_n = ceil(r_n^(-2 / (2 beta - 1)))``, optionally capped."""
    if beta <= 1:
        raise BadDecayParam(f"decay exponent must exceed 1, got {beta}")
    if not 0 < r_n < 1:
        raise ValueError("rate r_n must lie in (0, 1)")
    k = math.ceil(r_n ** (-2.0 / (2.0 * beta - 1.0)) - 1e-12)
    k = max(k, 1)
    return min(k, cap) if cap is not None else k


def _chaos_quantile(lams, chi2, alpha):
    return float(np.quantile(chi2[:, : lams.shape[0]] @ lams, 1 - alpha))


def eigenvalue_test(psi2_hat, spectrum: Spectrum, K_n, B_mc=DEFAULT_MC_DRAWS, alpha=0.05, seed=0,
                    nh=1.0, sensitivity=True) -> TestResult:
    """Reject when ``nh * psi2_hat`` exceeds the simulated weighted chi-square quantile."""
    lam = np.asarray(spectrum.values, dtype=float)
    if lam.size == 0 or lam[0] <= 0:
        raise DegenerateSpectrum("leading eigenvalue is zero")
    K = max(1, min(int(K_n), lam.shape[0]))
    K2 = min(2 * K, lam.shape[0]) if sensitivity else K
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    chi2 = rng.standard_normal((int(B_mc), K2)) ** 2
    crit = _chaos_quantile(lam[:K], chi2, alpha)
    details = {"K_n": K, "B_mc": int(B_mc)}
    if sensitivity and K2 > K:
        crit2 = _chaos_quantile(lam[:K2], chi2, alpha)
        details["critical_doubled_K"] = crit2
        if abs(crit2 - crit) > 0.05 * crit:
            warnings.warn("critical value moves by more than 5% when K_n doubles",
                          TruncationSensitivityWarning, stacklevel=2)
    stat = nh * psi2_hat
    return TestResult(float(stat), crit, alpha, bool(stat > crit), "eigenvalue", details)


def chaos_moments(k: CovKernelEstimate):
    """``(mu, sigma)`` of the Gaussian-chaos limit by quadrature on the kernel grid."""
    w = k.weights
    mu = float(w @ np.diag(k.matrix))
    sigma2 = 2.0 * float(w @ (k.matrix**2) @ w)
    return mu, math.sqrt(sigma2)


def conservative_test(psi2_hat, k: CovKernelEstimate, alpha=0.05, nh=1.0) -> TestResult:
    """Cantelli-bound test: critical value ``mu + sigma sqrt((1 - alpha) / alpha)``."""
    mu, sigma = chaos_moments(k)
    crit = mu + sigma * math.sqrt((1 - alpha) / alpha)
    stat = nh * psi2_hat
    return TestResult(float(stat), float(crit), alpha, bool(stat > crit), "cantelli",
                      {"mu": mu, "sigma": sigma})


def default_rate(nh):
    return 1.0 / math.sqrt(nh)


@dataclass(frozen=True)
class InferenceReport:
    ensemble: BootstrapEnsemble
    band: IntervalResult
    conservative: IntervalResult
    eigen: TestResult | None
    cantelli: TestResult
    kernel: CovKernelEstimate
    spectrum: Spectrum


def run_inference(fit, B=DEFAULT_B, B_mc=DEFAULT_MC_DRAWS, alpha=0.05, seed=0, beta=2.0,
                  c_const=None) -> InferenceReport:
    """Bootstrap once, then build both intervals and both tests."""
    ens = multiplier_bootstrap(fit, B=B, seed=seed)
    d = fit.dataset
    c_const = float(np.var(d.y, ddof=1)) if c_const is None else float(c_const)
    if isinstance(fit, KinkResult):
        curve = fit.dq_prime
        est = float(ens.weights @ curve.values**2)
        conservative = kink_conservative_interval(est, ens.s_hat, c_const, d.n, fit.config.bandwidth, alpha)
    else:
        curve = fit.dq
        est = float(ens.weights @ curve.values**2)
        conservative = conservative_interval(est, ens.s_hat, c_const, ens.scale, alpha)
    c_hat = sup_band_quantile(ens, alpha)
    band = band_interval_psi2(curve, c_hat, ens.scale, alpha)
    kern = estimate_cov_kernel(ens)
    spec = eigen_spectrum(kern)
    K_n = choose_truncation(default_rate(ens.scale), beta, cap=curve.u_grid.shape[0] - 1)
    try:
        eigen = eigenvalue_test(est, spec, K_n, B_mc, alpha, seed, ens.scale)
    except DegenerateSpectrum:
        eigen = None
    cantelli = conservative_test(est, kern, alpha, ens.scale)
    return InferenceReport(ens, band, conservative, eigen, cantelli, kern, spec)

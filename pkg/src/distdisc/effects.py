"""Causal estimands built on quantile-effect curves.

Integrals always run over the curve's ``[trim, 1 - trim]`` range with the
weights from :func:`distdisc.quantiles.curve_weights`, so every identity
below (``psi**2 = psi2_plus + psi2_minus``, the variance decomposition,
share normalization) holds exactly for the discrete rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import (
    DegenerateNull,
    DensityFloorWarning,
    GridMismatch,
    OrderTooLarge,
    WeakFirstStage,
)
from .quantiles import QuantileCurve, curve_integral, curve_weights

MAX_LEGENDRE_ORDER = 60
BOUND_SLACK = 1e-10
FIRST_STAGE_TOL = 0.02


# curves ----------------------------------------------------------------------

def quantile_effect_curve(q1: QuantileCurve, q0: QuantileCurve, role="dQ") -> QuantileCurve:
    """Pointwise ``Q1 - Q0`` on a shared u-grid."""
    if q1.u_grid.shape != q0.u_grid.shape or not np.array_equal(q1.u_grid, q0.u_grid):
        raise GridMismatch("quantile curves live on different u-grids")
    return QuantileCurve(q1.u_grid, q1.values - q0.values, max(q1.trim, q0.trim), role)


def wasserstein_effect(dq: QuantileCurve) -> float:
    return math.sqrt(max(curve_integral(dq, dq.values**2), 0.0))


def mean_effect(dq: QuantileCurve) -> float:
    return curve_integral(dq)


def heterogeneity_index(psi, tau, length=1.0):
    """Share of ``psi**2`` not explained by the mean shift.

    On a range of length ``L`` the mean of the curve is ``tau / L`` and the
    index is ``1 - tau**2 / (L * psi**2)``; for ``L = 1`` this is
    ``1 - (tau / psi)**2``.
    """
    if psi == 0:
        raise DegenerateNull("heterogeneity index is undefined when psi = 0")
    bound = math.sqrt(length) * psi
    if abs(tau) > bound + BOUND_SLACK * max(1.0, bound):
        raise ValueError(f"|tau|={abs(tau)} exceeds the upper bound {bound}")
    return float(min(max(1.0 - tau * tau / (length * psi * psi), 0.0), 1.0))


def dominance(dq: QuantileCurve):
    """Return ``(rho, psi2_plus, psi2_minus)``; ``rho`` is NaN when both parts vanish."""
    pos = np.maximum(dq.values, 0.0)
    neg = np.maximum(-dq.values, 0.0)
    plus = curve_integral(dq, pos**2)
    minus = curve_integral(dq, neg**2)
    total = plus + minus
    rho = (plus - minus) / total if total > 0 else float("nan")
    return rho, plus, minus


def contribution_curve(dq: QuantileCurve, psi=None) -> QuantileCurve:
    """``u -> dQ(u)^2 / psi^2``, integrating to one over the curve's range."""
    psi = wasserstein_effect(dq) if psi is None else psi
    if psi == 0:
        raise DegenerateNull("contribution curve is undefined when psi = 0")
    return QuantileCurve(dq.u_grid, dq.values**2 / psi**2, dq.trim, "contribution")


# L-moments -------------------------------------------------------------------

@lru_cache(maxsize=None)
def _legendre_coeffs(k):
    """Integer coefficients of ``P*_k`` in powers of ``u``, lowest first."""
    sign = -1 if k % 2 else 1
    return tuple(sign * math.comb(k, j) * math.comb(k + j, j) * (-1) ** j for j in range(k + 1))


def _eval_exact(coeffs, u):
    # u = a / b with b a power of two; Horner in integers, one rounding at the end
    a, b = float(u).as_integer_ratio()
    acc = 0
    scale = 1
    for c in reversed(coeffs):
        acc = acc * a + c * scale
        scale *= b
    # acc / b^k where k = len(coeffs) - 1
    return acc / b ** (len(coeffs) - 1)


def shifted_legendre(k, u):
    """Shifted Legendre polynomial ``P*_k`` on ``[0, 1]``.

    Evaluated from the integer closed form with exact rational arithmetic,
    so the result is the correctly rounded value for every ``k <= 60``.
    """
    if k < 0 or int(k) != k:
        raise ValueError("order must be a nonnegative integer")
    if k > MAX_LEGENDRE_ORDER:
        raise OrderTooLarge(f"order {k} exceeds {MAX_LEGENDRE_ORDER}")
    coeffs = _legendre_coeffs(int(k))
    u_arr = np.asarray(u, dtype=float)
    if u_arr.ndim == 0:
        return float(_eval_exact(coeffs, float(u_arr)))
    return _legendre_table(int(k), u_arr.tobytes(), u_arr.shape)


@lru_cache(maxsize=256)
def _legendre_table(k, raw, shape):
    u = np.frombuffer(raw, dtype=float).reshape(shape)
    coeffs = _legendre_coeffs(k)
    out = np.array([_eval_exact(coeffs, v) for v in u.ravel()], dtype=float).reshape(shape)
    out.setflags(write=False)
    return out


def legendre_basis(u_grid, K):
    """Rows ``P*_0 .. P*_{K-1}`` evaluated on ``u_grid``."""
    return np.vstack([shifted_legendre(k, u_grid) for k in range(K)])


@dataclass(frozen=True)
class LMomentVector:
    values: np.ndarray
    K: int

    def __getitem__(self, k):
        """1-based access: ``lm[1]`` is the location L-moment."""
        if not 1 <= k <= self.K:
            raise IndexError(k)
        return float(self.values[k - 1])


def l_moments(q: QuantileCurve, K=10) -> LMomentVector:
    """``lambda_k = int Q(u) P*_{k-1}(u) du`` for ``k = 1..K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    basis = legendre_basis(q.u_grid, K)
    return LMomentVector(basis @ (curve_weights(q) * q.values), K)


def _shares(dlam, psi2):
    K = dlam.shape[0]
    r2 = (2 * np.arange(1, K + 1) - 1) * dlam**2 / psi2
    tail = max(1.0 - float(r2.sum()), 0.0)
    return r2, tail


def effect_shares(dq: QuantileCurve, K=10):
    """L-moment shares of ``psi**2`` computed directly from an effect curve.

    Returns ``(r2, tail)`` with ``r2[k-1] = (2k-1) dlambda_k^2 / psi^2``.
    """
    psi2 = wasserstein_effect(dq) ** 2
    if psi2 == 0:
        raise DegenerateNull("L-moment shares are undefined when psi = 0")
    return _shares(l_moments(dq, K).values, psi2)


def l_moment_decomposition(q1: QuantileCurve, q0: QuantileCurve, K=10):
    """Shares of the squared distance explained by each L-moment difference.

    Returns ``(r2, tail)`` where ``r2`` maps ``k`` to its share.
    """
    dq = quantile_effect_curve(q1, q0)
    psi2 = wasserstein_effect(dq) ** 2
    if psi2 == 0:
        raise DegenerateNull("L-moment shares are undefined when psi = 0")
    dlam = l_moments(q1, K).values - l_moments(q0, K).values
    r2, tail = _shares(dlam, psi2)
    return {k + 1: float(v) for k, v in enumerate(r2)}, tail


def share_buckets(r2, tail, upto=3):
    """Collapse shares into ``k = 1..upto`` plus a ``>= upto+1`` bucket."""
    r2 = list(r2)
    out = {str(k): float(r2[k - 1]) for k in range(1, min(upto, len(r2)) + 1)}
    out[f">={upto + 1}"] = float(sum(r2[upto:]) + tail)
    return out


# summaries -------------------------------------------------------------------

def _summary_fields(dq: QuantileCurve, K):
    psi = wasserstein_effect(dq)
    tau = mean_effect(dq)
    rho, plus, minus = dominance(dq)
    undefined = []
    length = dq.bounds[1] - dq.bounds[0]
    try:
        gamma = heterogeneity_index(psi, tau, length)
    except DegenerateNull:
        gamma = float("nan")
        undefined.append("gamma")
    if math.isnan(rho):
        undefined.append("rho")
    try:
        r2, tail = effect_shares(dq, K)
        r2 = tuple(float(v) for v in r2)
    except DegenerateNull:
        r2, tail = tuple([float("nan")] * K), float("nan")
        undefined.append("r2")
    return dict(
        psi=psi, tau=tau, gamma=gamma, rho=rho, psi2_plus=plus, psi2_minus=minus,
        r2=r2, tail=tail, trim=dq.trim, undefined=tuple(undefined),
    )


@dataclass(frozen=True)
class EffectSummary:
    psi: float
    tau: float
    gamma: float
    rho: float
    psi2_plus: float
    psi2_minus: float
    r2: tuple
    tail: float
    trim: float
    design: str | None = None
    undefined: tuple = ()
    extras: dict = field(default_factory=dict)

    @property
    def K(self):
        return len(self.r2)

    def buckets(self, upto=3):
        return share_buckets(self.r2, self.tail, upto)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class KinkEffectSummary:
    psi_prime: float
    tau_prime: float
    gamma: float
    rho: float
    psi2_plus: float
    psi2_minus: float
    r2: tuple
    tail: float
    trim: float
    first_stage: float
    design: str | None = None
    undefined: tuple = ()
    extras: dict = field(default_factory=dict)

    @property
    def K(self):
        return len(self.r2)

    def buckets(self, upto=3):
        return share_buckets(self.r2, self.tail, upto)

    def to_dict(self):
        return asdict(self)


def summarize(dq: QuantileCurve, K=10, design=None, extras=None) -> EffectSummary:
    """All discontinuity estimands from a quantile-effect curve."""
    return EffectSummary(**_summary_fields(dq, K), design=design, extras=dict(extras or {}))


def kink_effects(dq_prime: QuantileCurve, first_stage, K=10, design=None, extras=None):
    """Kink estimands from a quantile-slope-effect curve.

    ``first_stage`` is recorded; it is already folded into ``dq_prime``.
    """
    f = _summary_fields(dq_prime, K)
    return KinkEffectSummary(
        psi_prime=f.pop("psi"),
        tau_prime=f.pop("tau"),
        first_stage=float(first_stage),
        design=design,
        extras=dict(extras or {}),
        **f,
    )


# fuzzy designs ---------------------------------------------------------------

@dataclass(frozen=True)
class ComplierCdfs:
    treated: np.ndarray
    untreated: np.ndarray
    first_stage: float
    raw_range: tuple[float, float]


def check_first_stage(value, tolerance=FIRST_STAGE_TOL):
    if not abs(value) >= tolerance:
        raise WeakFirstStage(f"first stage {value:.4g} is below tolerance {tolerance}")
    return float(value)


def fuzzy_complier_cdfs(
    num1_right, num1_left, num0_right, num0_left, pi_right, pi_left, tolerance=FIRST_STAGE_TOL
) -> ComplierCdfs:
    """Local Wald ratios for complier outcome CDFs.

    ``num1_*`` are CDF fits of ``I(Y <= y) A`` and ``num0_*`` of
    ``I(Y <= y) (1 - A)``; ``pi_*`` are mean fits of ``A``.  The untreated
    ratio uses ``pi_0 = 1 - pi`` so its denominator is the negated jump.
    The returned arrays are unrepaired.
    """
    jump = pi_right.value - pi_left.value
    check_first_stage(jump, tolerance)
    f1 = (num1_right.value - num1_left.value) / jump
    f0 = (num0_right.value - num0_left.value) / (-jump)
    lo = float(min(f1.min(), f0.min()))
    hi = float(max(f1.max(), f0.max()))
    return ComplierCdfs(f1, f0, float(jump), (lo, hi))


# kink designs ----------------------------------------------------------------

def nearest_index(grid, points):
    """Index of the nearest grid point (ties go to the lower point)."""
    grid = np.asarray(grid, dtype=float)
    pos = np.clip(np.searchsorted(grid, points), 1, grid.shape[0] - 1)
    left = grid[pos - 1]
    right = grid[pos]
    return np.where(np.abs(points - left) <= np.abs(right - points), pos - 1, pos)


def kink_quantile_slope_curve(
    cdf_right, cdf_left, density, first_stage, q_pooled: QuantileCurve,
    tolerance=FIRST_STAGE_TOL, floor_share=0.1,
) -> QuantileCurve:
    """Quantile-slope effect ``-(dF+ - dF-)(Q(u)) / (first_stage f(Q(u)))``.

    Slopes and density are read at the y-grid point nearest to the pooled
    quantile ``Q(u)``.
    """
    check_first_stage(first_stage, tolerance)
    if not np.array_equal(cdf_right.y_grid, cdf_left.y_grid):
        raise GridMismatch("one-sided fits use different y-grids")
    idx = nearest_index(cdf_right.y_grid, q_pooled.values)
    dens = density.values[idx]
    at_floor = float(np.mean(density.raw[idx] <= density.floor))
    if at_floor > floor_share:
        warnings.warn(
            f"{at_floor:.0%} of quantile levels use the density floor",
            DensityFloorWarning,
            stacklevel=2,
        )
    jump = cdf_right.slope[idx] - cdf_left.slope[idx]
    values = -jump / (first_stage * dens)
    return QuantileCurve(q_pooled.u_grid, values, q_pooled.trim, "dQprime")

"""One-sided local polynomial engine.

Every fit regresses some per-observation response on
``r_p(z) = (1, z, ..., z^p)`` with ``z = (x - cutoff) / h`` and kernel
weights ``K(z)``, using only the observations on one side of the cutoff.
CDF fits share one design across the whole y-grid, so the weighted
normal equations are factored once and the right-hand sides for all
``I(Y <= y)`` responses come from a cumulative sum over the window sorted
by ``y``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import linalg

from .core_data import Dataset
from .exceptions import InsufficientData, SingularDesign, SingularFit

PIVOT_TOL = 1e-12


class Kernel(str, enum.Enum):
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"
    EPANECHNIKOV = "epanechnikov"
    BIWEIGHT = "biweight"
    TRIWEIGHT = "triweight"


# K(u) on [0, 1] as a polynomial in |u|, lowest degree first.
_KERNEL_POLY = {
    Kernel.UNIFORM: (Fraction(1, 2),),
    Kernel.TRIANGULAR: (Fraction(1), Fraction(-1)),
    Kernel.EPANECHNIKOV: (Fraction(3, 4), Fraction(0), Fraction(-3, 4)),
    Kernel.BIWEIGHT: tuple(Fraction(15, 16) * c for c in (1, 0, -2, 0, 1)),
    Kernel.TRIWEIGHT: tuple(Fraction(35, 32) * c for c in (1, 0, -3, 0, 3, 0, -1)),
}


def kernel_weight(k, u):
    """Evaluate kernel ``k`` at ``u``; zero outside ``[-1, 1]``."""
    k = Kernel(k)
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    coef = [float(c) for c in _KERNEL_POLY[k]]
    val = np.polynomial.polynomial.polyval(np.minimum(a, 1.0), coef)
    out = np.where(a <= 1.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _half_moment(k, m):
    """Exact ``int_0^1 K(u) u^m du``."""
    return sum(c / (m + j + 1) for j, c in enumerate(_KERNEL_POLY[k]))


def _side_moment(k, m, side):
    mom = _half_moment(k, m)
    if side == "right":
        return mom
    if side == "left":
        return mom if m % 2 == 0 else -mom
    if side is None:
        return 2 * mom if m % 2 == 0 else Fraction(0)
    raise ValueError(f"bad side {side!r}")


@dataclass(frozen=True)
class DesignMoments:
    gamma: np.ndarray
    lam: np.ndarray
    side: str | None
    order: int
    bias_order: int

    def bias_factor(self):
        """``e0' Gamma^{-1} Lambda``: bias per unit of the scaled (p+1) coefficient."""
        return float(linalg.solve(self.gamma, self.lam, assume_a="pos")[0])


def design_moments(k, p, q=None, side="right"):
    """Closed-form one-sided kernel moment matrices.

    ``gamma[i, j] = int_side K(u) u^(i+j) du`` and
    ``lam[i] = int_side u^q K(u) u^i du``; both exact rationals rounded once.
    """
    k = Kernel(k)
    q = p + 1 if q is None else q
    if p < 0 or p > 3:
        raise ValueError("order p must be in 0..3")
    gamma = np.array(
        [[float(_side_moment(k, i + j, side)) for j in range(p + 1)] for i in range(p + 1)]
    )
    lam = np.array([float(_side_moment(k, q + i, side)) for i in range(p + 1)])
    try:
        _factor(gamma)
    except SingularFit as exc:
        raise SingularDesign(str(exc)) from None
    return DesignMoments(gamma, lam, side, p, q)


@dataclass(frozen=True)
class FitConfig:
    cutoff: float
    bandwidth: float
    order: int = 2
    kernel: Kernel = Kernel.TRIANGULAR
    y_grid: np.ndarray | None = None
    u_grid: np.ndarray | None = None
    trim: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if not 0 <= self.trim < 0.5:
            raise ValueError("trim must lie in [0, 0.5)")
        for name in ("y_grid", "u_grid"):
            grid = getattr(self, name)
            if grid is None:
                continue
            grid = np.asarray(grid, dtype=float)
            if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, grid)
        if self.u_grid is not None and (self.u_grid[0] <= 0 or self.u_grid[-1] >= 1):
            raise ValueError("u_grid must lie inside (0, 1)")

    @property
    def bias_order(self):
        return self.order + 1


def default_bandwidth(x, constant=None, rate=-0.2):
    """``h = c * n^rate`` with ``c = sd(x)`` unless a constant is given."""
    x = np.asarray(x, dtype=float)
    c = float(np.std(x, ddof=1)) if constant is None else float(constant)
    return c * x.shape[0] ** rate


def default_y_grid(y, size=401):
    y = np.asarray(y, dtype=float)
    lo, hi = float(y.min()), float(y.max())
    span = hi - lo
    if span == 0:
        span = max(abs(lo), 1.0)
    return np.linspace(lo - 0.01 * span, hi + 0.01 * span, size)


def default_u_grid(size=999):
    return np.arange(1, size + 1) / (size + 1)


@dataclass(frozen=True)
class _Window:
    index: np.ndarray  # positions in the dataset
    z: np.ndarray
    weight: np.ndarray
    design: np.ndarray  # r_p(z) rows

    @property
    def n(self):
        return self.index.shape[0]


def _window(d: Dataset, side, cutoff, h, kernel, order):
    z_all = (d.x - cutoff) / h
    mask = np.abs(z_all) <= 1.0
    if side == "right":
        mask &= d.x >= cutoff
    elif side == "left":
        mask &= d.x < cutoff
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    index = np.flatnonzero(mask)
    z = z_all[index]
    w = kernel_weight(kernel, z)
    keep = w > 0
    index, z, w = index[keep], z[keep], w[keep]
    if index.shape[0] < order + 2:
        raise InsufficientData(
            f"{side} window holds {index.shape[0]} observations; order {order} needs {order + 2}"
        )
    design = np.vander(z, order + 1, increasing=True)
    return _Window(index, z, w, design)


def _factor(gram):
    try:
        chol = linalg.cholesky(gram, lower=True)
    except linalg.LinAlgError:
        raise SingularFit("local design is not positive definite") from None
    pivots = np.diag(chol) ** 2
    if pivots.min() < PIVOT_TOL * pivots.max():
        raise SingularFit("local design is rank deficient")
    return chol


def _solve(chol, rhs):
    return linalg.cho_solve((chol, True), rhs)


def _resolve_rule(rule, d: Dataset):
    """Per-observation multipliers/responses from an array, role name or callable."""
    if rule is None:
        return None
    if isinstance(rule, str):
        values = d.treatment if rule == "a" else getattr(d, rule)
        if values is None:
            raise ValueError(f"dataset has no column {rule!r}")
        return np.asarray(values, dtype=float)
    if callable(rule):
        return np.asarray(rule(d), dtype=float)
    values = np.asarray(rule, dtype=float)
    if values.shape != (d.n,):
        raise ValueError("rule array must have one entry per observation")
    return values


@dataclass(frozen=True)
class CdfFit:
    side: str
    y_grid: np.ndarray
    coeffs: np.ndarray  # (n_y, order + 1)
    value: np.ndarray
    slope: np.ndarray
    bandwidth: float
    order: int
    kernel: Kernel
    effective_n: float
    n_window: int
    bias: np.ndarray | None = None
    raw_value: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PolyFit:
    side: str
    coeffs: np.ndarray
    value: float
    slope: float
    bandwidth: float
    order: int
    effective_n: float


@dataclass(frozen=True)
class DensityFit:
    y_grid: np.ndarray
    values: np.ndarray
    raw: np.ndarray
    h_y: float
    floor: float
    side: str | None

    @property
    def floored_share(self):
        return float(np.mean(self.raw <= self.floor))


def _effective_n(w, kernel):
    return float(w.sum() / kernel_weight(kernel, 0.0))


def fit_local_cdf(d: Dataset, side, cfg: FitConfig, subset_rule=None, order=None) -> CdfFit:
    """One-sided local polynomial estimate of ``F(y | cutoff±)`` on ``cfg.y_grid``.

    Responses are ``I(Y_i <= y)``, optionally multiplied by ``subset_rule``
    (e.g. ``I(A_i = a)`` for the numerators of a local Wald ratio).
    The intercept is not clipped here.
    """
    p = cfg.order if order is None else order
    if cfg.y_grid is None:
        raise ValueError("FitConfig.y_grid is required for CDF fits")
    win = _window(d, side, cfg.cutoff, cfg.bandwidth, cfg.kernel, p)
    chol = _factor(win.design.T @ (win.weight[:, None] * win.design))

    mult = win.weight
    sub = _resolve_rule(subset_rule, d)
    if sub is not None:
        mult = mult * sub[win.index]
    y = d.y[win.index]
    order_y = np.argsort(y, kind="stable")
    contrib = (mult[order_y])[:, None] * win.design[order_y]
    cum = np.cumsum(contrib, axis=0)
    pos = np.searchsorted(y[order_y], cfg.y_grid, side="right")
    rhs = np.zeros((cfg.y_grid.shape[0], p + 1))
    hit = pos > 0
    rhs[hit] = cum[pos[hit] - 1]
    coeffs = _solve(chol, rhs.T).T

    value = coeffs[:, 0].copy()
    slope = coeffs[:, 1] / cfg.bandwidth if p >= 1 else np.full_like(value, np.nan)
    return CdfFit(
        side=side,
        y_grid=cfg.y_grid,
        coeffs=coeffs,
        value=value,
        slope=slope,
        bandwidth=cfg.bandwidth,
        order=p,
        kernel=cfg.kernel,
        effective_n=_effective_n(win.weight, cfg.kernel),
        n_window=win.n,
        raw_value=value,
    )


def bias_correct(fit: CdfFit, cfg: FitConfig, d: Dataset, subset_rule=None) -> CdfFit:
    """Subtract the estimated leading bias from an order-p CDF fit.

    The (p+1)-th derivative enters through the scaled top coefficient of an
    order p+1 pilot fit on the same side and bandwidth.
    """
    p = fit.order
    pilot = fit_local_cdf(d, fit.side, cfg, subset_rule=subset_rule, order=p + 1)
    factor = design_moments(fit.kernel, p, p + 1, fit.side).bias_factor()
    bias = factor * pilot.coeffs[:, p + 1]
    return replace(fit, value=fit.raw_value - bias, bias=bias)


def fit_local_mean(d: Dataset, side, cfg: FitConfig, response_rule, order=None) -> PolyFit:
    """Local polynomial regression of an arbitrary response at the cutoff.

    ``response_rule`` is a column name (``"y"``, ``"a"``, ``"t"``), an array
    with one value per observation, or a callable mapping the dataset to
    such an array.
    """
    p = cfg.order if order is None else order
    resp = _resolve_rule(response_rule, d)
    win = _window(d, side, cfg.cutoff, cfg.bandwidth, cfg.kernel, p)
    chol = _factor(win.design.T @ (win.weight[:, None] * win.design))
    coeffs = _solve(chol, win.design.T @ (win.weight * resp[win.index]))
    slope = coeffs[1] / cfg.bandwidth if p >= 1 else float("nan")
    return PolyFit(
        side=side,
        coeffs=coeffs,
        value=float(coeffs[0]),
        slope=float(slope),
        bandwidth=cfg.bandwidth,
        order=p,
        effective_n=_effective_n(win.weight, cfg.kernel),
    )


def default_density_bandwidth(y):
    y = np.asarray(y, dtype=float)
    sd = float(np.std(y, ddof=1)) if y.shape[0] > 1 else 0.0
    if sd == 0:
        sd = 1e-3 * max(1.0, float(np.abs(y).max()))
    return 1.06 * sd * y.shape[0] ** -0.2


def density_floor(y):
    span = float(np.ptp(y))
    return 1e-3 / span if span > 0 else 1e-3


def _one_sided_density(d, side, cfg, h_y, sub, order):
    win = _window(d, side, cfg.cutoff, cfg.bandwidth, cfg.kernel, order)
    chol = _factor(win.design.T @ (win.weight[:, None] * win.design))
    y = d.y[win.index]
    resp = kernel_weight(cfg.kernel, (y[:, None] - cfg.y_grid[None, :]) / h_y) / h_y
    mult = win.weight if sub is None else win.weight * sub[win.index]
    coeffs = _solve(chol, win.design.T @ (mult[:, None] * resp))
    return coeffs[0]


def fit_conditional_density(
    d: Dataset, cfg: FitConfig, h_y=None, side=None, subset_rule=None, floor=None, order=None
) -> DensityFit:
    """Local polynomial estimate of ``f(y | x = cutoff)`` on the y-grid.

    Responses are ``K((Y_i - y) / h_y) / h_y``.  With ``side=None`` the
    two one-sided intercepts are averaged, which keeps the estimate
    consistent when the conditional density is only continuous (not
    smooth) in x at the cutoff, as in kink designs.
    """
    p = cfg.order if order is None else order
    sub = _resolve_rule(subset_rule, d)
    in_window = np.abs(d.x - cfg.cutoff) <= cfg.bandwidth
    if side is not None:
        in_window &= d.side_mask(side)
    if not in_window.any():
        raise InsufficientData("empty window for density estimation")
    if h_y is None:
        h_y = default_density_bandwidth(d.y[in_window])
    if floor is None:
        floor = density_floor(d.y)
    if side is None:
        raw = 0.5 * (
            _one_sided_density(d, "left", cfg, h_y, sub, p)
            + _one_sided_density(d, "right", cfg, h_y, sub, p)
        )
    else:
        raw = _one_sided_density(d, side, cfg, h_y, sub, p)
    values = np.maximum(raw, floor)
    return DensityFit(cfg.y_grid, values, raw, float(h_y), float(floor), side)


def running_density_at_cutoff(d: Dataset, cfg: FitConfig) -> float:
    """Boundary-corrected density of the running variable at the cutoff.

    Each side uses the local-linear equivalent kernel
    ``e0' Gamma_1^{-1} r_1(z) K(z)``, and the two one-sided estimates are
    averaged.
    """
    h = cfg.bandwidth
    est = []
    for side in ("left", "right"):
        win = _window(d, side, cfg.cutoff, h, cfg.kernel, 1)
        gamma = design_moments(cfg.kernel, 1, 2, side).gamma
        equiv = linalg.solve(gamma, win.design.T, assume_a="pos")[0] * win.weight
        est.append(equiv.sum() / (d.n * h))
    return float(0.5 * (est[0] + est[1]))


def bias_correct_mean(fit: PolyFit, cfg: FitConfig, d: Dataset, response_rule) -> PolyFit:
    """Mean-fit analogue of :func:`bias_correct`."""
    p = fit.order
    pilot = fit_local_mean(d, fit.side, cfg, response_rule, order=p + 1)
    factor = design_moments(cfg.kernel, p, p + 1, fit.side).bias_factor()
    return replace(fit, value=fit.value - factor * float(pilot.coeffs[p + 1]))


def equivalent_weights(d: Dataset, side, cfg: FitConfig, order=None, bias_corrected=False, deriv=0):
    """Exact linear weights of a one-sided fit.

    Returns ``(index, weights, design)`` such that the fitted level (or,
    with ``deriv=1``, the slope) equals ``sum(weights * response[index])``
    for any response.  With ``bias_corrected`` the weights include the
    pilot-fit correction term.
    """
    p = cfg.order if order is None else order
    win = _window(d, side, cfg.cutoff, cfg.bandwidth, cfg.kernel, p + int(bias_corrected))
    design = win.design[:, : p + 1]
    chol = _factor(design.T @ (win.weight[:, None] * design))
    unit = np.zeros(p + 1)
    unit[deriv] = 1.0
    w = (design @ _solve(chol, unit)) * win.weight
    if bias_corrected:
        chol_q = _factor(win.design.T @ (win.weight[:, None] * win.design))
        top = np.zeros(p + 2)
        top[p + 1] = 1.0
        factor = design_moments(cfg.kernel, p, p + 1, side).bias_factor()
        w = w - factor * (win.design @ _solve(chol_q, top)) * win.weight
    if deriv:
        w = w / cfg.bandwidth**deriv
    return win.index, w, design

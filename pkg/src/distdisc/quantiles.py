"""From estimated CDFs to quantile curves, plus quadrature on the u-grid."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import EmptyGrid, SaturationWarning

GRID_TOL = 1e-12


@dataclass(frozen=True)
class QuantileCurve:
    """Values of a quantile-type function on a u-grid.

    ``role`` tags what the curve is (``"Q0"``, ``"Q1"``, ``"dQ"``,
    ``"dQprime"``, ``"contribution"``, ...).  ``trim`` is the trimming
    level the curve's integrals refer to: integrals run over
    ``[trim, 1 - trim]``.
    """

    u_grid: np.ndarray
    values: np.ndarray
    trim: float = 0.0
    role: str = "Q"
    saturated: np.ndarray | None = None
    y_index: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.u_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if u.ndim != 1 or v.shape != u.shape:
            raise ValueError("u_grid and values must be 1-d arrays of equal length")
        if u.size and (u[0] <= 0 or u[-1] >= 1 or np.any(np.diff(u) <= 0)):
            raise ValueError("u_grid must be strictly increasing inside (0, 1)")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "u_grid", u)
        object.__setattr__(self, "values", v)

    @property
    def bounds(self):
        return self.trim, 1.0 - self.trim

    @property
    def any_saturated(self):
        return bool(self.saturated is not None and self.saturated.any())

    def with_values(self, values, role=None):
        return QuantileCurve(self.u_grid, values, self.trim, role or self.role)


def monotonize(values):
    """Clip to ``[0, 1]`` and take the running maximum."""
    return np.maximum.accumulate(np.clip(np.asarray(values, dtype=float), 0.0, 1.0))


def invert_cdf(cdf, u_grid, y_grid=None, role="Q", warn=True) -> QuantileCurve:
    """Left-continuous generalized inverse on the y-grid.

    ``Q(u)`` is the smallest grid ``y`` with ``F(y) >= u``.  When ``u``
    exceeds ``max F`` the largest grid point is returned and the entry is
    flagged as saturated.

    Parameters
    ----------
    cdf : CdfFit or array_like
        Monotone CDF values, or a fit whose ``value`` attribute holds them.
    u_grid : array_like
    y_grid : array_like, optional
        Required when ``cdf`` is a plain array.
    """
    if y_grid is None:
        y_grid, values = cdf.y_grid, cdf.value
    else:
        values = cdf
    values = np.asarray(values, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    u_grid = np.asarray(u_grid, dtype=float)
    if values.shape != y_grid.shape:
        raise ValueError("CDF values and y_grid differ in length")
    if np.any(np.diff(values) < 0):
        raise ValueError("CDF values must be nondecreasing; apply monotonize first")
    idx = np.searchsorted(values, u_grid, side="left")
    saturated = idx >= values.shape[0]
    idx = np.minimum(idx, values.shape[0] - 1)
    if warn and saturated.any():
        warnings.warn(
            f"{int(saturated.sum())} quantile levels exceed the fitted CDF maximum",
            SaturationWarning,
            stacklevel=2,
        )
    return QuantileCurve(u_grid, y_grid[idx], 0.0, role, saturated, idx)


def trim(q: QuantileCurve, gamma: float) -> QuantileCurve:
    """Restrict a curve to ``u`` in the closed interval ``[gamma, 1 - gamma]``."""
    if not 0 <= gamma < 0.5:
        raise EmptyGrid(f"trim level {gamma} leaves no quantile levels")
    keep = (q.u_grid >= gamma - GRID_TOL) & (q.u_grid <= 1 - gamma + GRID_TOL)
    if not keep.any():
        raise EmptyGrid(f"no grid points in [{gamma}, {1 - gamma}]")
    sub = lambda a: None if a is None else a[keep]  # noqa: E731
    return replace(
        q,
        u_grid=q.u_grid[keep],
        values=q.values[keep],
        trim=max(gamma, q.trim),
        saturated=sub(q.saturated),
        y_index=sub(q.y_index),
    )


def quadrature_weights(u_grid, lower=None, upper=None):
    """Weights ``w`` with ``sum(w * g) ~ int_lower^upper g(u) du``.

    Composite trapezoid between grid points.  Where ``lower``/``upper``
    extend past the outermost grid points the end values are held flat over
    the gap, so a constant integrates exactly to ``upper - lower``.  With
    the defaults the integral covers the grid range only.
    """
    u = np.asarray(u_grid, dtype=float)
    if u.shape[0] < 2:
        raise EmptyGrid("quadrature needs at least two grid points")
    du = np.diff(u)
    w = np.zeros_like(u)
    w[:-1] += du / 2
    w[1:] += du / 2
    if lower is not None:
        w[0] += max(u[0] - lower, 0.0)
    if upper is not None:
        w[-1] += max(upper - u[-1], 0.0)
    return w


def integrate(values, u_grid, lower=None, upper=None):
    """Trapezoid integral of curve values (see :func:`quadrature_weights`)."""
    return float(np.dot(quadrature_weights(u_grid, lower, upper), np.asarray(values, dtype=float)))


def curve_weights(q: QuantileCurve):
    """Quadrature weights over the curve's own ``[trim, 1 - trim]`` range."""
    lo, hi = q.bounds
    return quadrature_weights(q.u_grid, lo, hi)


def curve_integral(q: QuantileCurve, values=None):
    v = q.values if values is None else values
    return float(np.dot(curve_weights(q), v))

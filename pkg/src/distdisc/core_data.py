"""Observation schema, CSV ingestion and validation."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from .exceptions import EmptySide, MissingColumn, ParseError

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})


class Design(str, enum.Enum):
    SHARP_RDD = "SharpRDD"
    FUZZY_RDD = "FuzzyRDD"
    SHARP_KINK = "SharpKink"
    FUZZY_KINK = "FuzzyKink"

    @property
    def is_kink(self):
        return self in (Design.SHARP_KINK, Design.FUZZY_KINK)


class Observation(NamedTuple):
    x: float
    y: float
    a: float | None = None
    t: float | None = None


def _frozen(values, dtype=float):
    if values is None:
        return None
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store of observations around a cutoff.

    The right side is ``x >= cutoff`` and the left side ``x < cutoff``, so
    an observation sitting exactly on the cutoff counts as treated.
    """

    x: np.ndarray
    y: np.ndarray
    cutoff: float = 0.0
    design: Design = Design.SHARP_RDD
    a: np.ndarray | None = None
    t: np.ndarray | None = None
    cluster: np.ndarray | None = None
    benefit_slopes: tuple[float, float] | None = None
    dropped_rows: tuple[int, ...] = field(default=())

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "design", Design(self.design))
        set_(self, "cutoff", float(self.cutoff))
        set_(self, "x", _frozen(self.x))
        set_(self, "y", _frozen(self.y))
        set_(self, "a", _frozen(self.a))
        set_(self, "t", _frozen(self.t))
        set_(self, "cluster", _frozen(self.cluster, dtype=object))
        if self.benefit_slopes is not None:
            left, right = self.benefit_slopes
            set_(self, "benefit_slopes", (float(left), float(right)))
        self._check()

    def _check(self):
        n = self.x.shape[0]
        if self.x.ndim != 1 or self.y.shape != (n,):
            raise ValueError("x and y must be 1-d arrays of equal length")
        for name in ("a", "t", "cluster"):
            col = getattr(self, name)
            if col is not None and col.shape != (n,):
                raise ValueError(f"column {name} has length {col.shape[0]}, expected {n}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("x and y must be finite")
        if self.a is not None and not np.all((self.a == 0) | (self.a == 1)):
            raise ValueError("treatment indicator must be 0 or 1")
        if self.t is not None and not np.all(np.isfinite(self.t)):
            raise ValueError("benefit column t must be finite")
        if self.design is Design.FUZZY_RDD and self.a is None:
            raise MissingColumn("a")
        if self.design is Design.FUZZY_KINK and self.t is None:
            raise MissingColumn("t")
        if self.design is Design.SHARP_KINK and self.t is None and self.benefit_slopes is None:
            raise MissingColumn("t")
        n_right = int(np.count_nonzero(self.right))
        n_left = n - n_right
        if n_left < 2 or n_right < 2:
            raise EmptySide(n_left, n_right)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def right(self):
        return self.x >= self.cutoff

    @property
    def left(self):
        return self.x < self.cutoff

    @property
    def treatment(self):
        """Observed treatment, falling back to the sharp rule when absent."""
        if self.a is not None:
            return self.a
        return self.right.astype(float)

    def side_mask(self, side):
        if side == "right":
            return self.right
        if side == "left":
            return self.left
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return Observation(
            float(self.x[i]),
            float(self.y[i]),
            None if self.a is None else float(self.a[i]),
            None if self.t is None else float(self.t[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(self.n))


@dataclass(frozen=True)
class ValidationReport:
    n_left: int
    n_right: int
    side_treatment_rates: tuple[float, float] | None
    warnings: tuple[str, ...] = ()


def validate(d: Dataset, first_stage_threshold: float = 0.05) -> ValidationReport:
    """Summarise side counts and flag design inconsistencies.

    Never raises; problems surface as entries in ``warnings``.
    """
    right = d.right
    n_right = int(np.count_nonzero(right))
    n_left = d.n - n_right
    notes = []
    rates = None
    if d.a is not None:
        rate_left = float(d.a[~right].mean())
        rate_right = float(d.a[right].mean())
        rates = (rate_left, rate_right)
        if d.design is Design.SHARP_RDD:
            bad = np.flatnonzero(d.a != right.astype(float))
            for k in bad:
                notes.append(f"sharp rule violated at row {int(k)}")
        elif d.design is Design.FUZZY_RDD:
            if abs(rate_right - rate_left) < first_stage_threshold:
                notes.append(
                    f"weak first stage: treated fraction {rate_left:.3g} left vs "
                    f"{rate_right:.3g} right"
                )
    if d.dropped_rows:
        notes.append(f"dropped {len(d.dropped_rows)} rows with missing values")
    return ValidationReport(n_left, n_right, rates, tuple(notes))


def _parse(raw, row, column):
    token = raw.strip()
    if token.lower() in MISSING_TOKENS:
        return None
    try:
        value = float(token)
    except ValueError:
        raise ParseError(row, column, raw) from None
    if not math.isfinite(value):
        raise ParseError(row, column, raw)
    return value


def load_csv(
    path,
    schema: Mapping[str, str],
    design=Design.SHARP_RDD,
    cutoff: float = 0.0,
    benefit_slopes=None,
) -> Dataset:
    """Read a header-first UTF-8 CSV into a :class:`Dataset`.

    Parameters
    ----------
    path : path-like
        CSV file with a header row and '.' as decimal point.
    schema : mapping
        Maps the roles ``x``, ``y`` and optionally ``a``, ``t``, ``cluster``
        to column names in the file.
    design : Design or str
    cutoff : float
    benefit_slopes : (float, float), optional
        Declared left/right slopes of the benefit rule for sharp kinks.

    Rows with a missing required value are dropped and listed in
    ``Dataset.dropped_rows``; a present but unparseable value raises
    :class:`ParseError` with its 0-based data row index.
    """
    design = Design(design)
    required = ["x", "y"]
    if design is Design.FUZZY_RDD:
        required.append("a")
    if design is Design.FUZZY_KINK or (design is Design.SHARP_KINK and benefit_slopes is None):
        required.append("t")
    optional = [r for r in ("a", "t") if r not in required and schema.get(r)]
    for role in required:
        if not schema.get(role):
            raise MissingColumn(role)

    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for role in required + optional + (["cluster"] if schema.get("cluster") else []):
            if schema[role] not in header:
                raise MissingColumn(schema[role])
        cols = {role: [] for role in required + optional}
        clusters = []
        dropped = []
        for row_idx, row in enumerate(reader):
            parsed = {}
            for role in required + optional:
                parsed[role] = _parse(row[schema[role]], row_idx, schema[role])
            if any(parsed[r] is None for r in required):
                dropped.append(row_idx)
                continue
            for role in optional:
                if parsed[role] is None:
                    parsed[role] = math.nan
            for role, value in parsed.items():
                cols[role].append(value)
            if schema.get("cluster"):
                clusters.append(row[schema["cluster"]])

    for role in optional:
        if np.isnan(cols[role]).any():
            # optional columns are all-or-nothing
            cols[role] = None
    return Dataset(
        x=np.asarray(cols["x"], dtype=float),
        y=np.asarray(cols["y"], dtype=float),
        cutoff=cutoff,
        design=design,
        a=None if cols.get("a") is None else np.asarray(cols["a"], dtype=float),
        t=None if cols.get("t") is None else np.asarray(cols["t"], dtype=float),
        cluster=np.asarray(clusters, dtype=object) if schema.get("cluster") else None,
        benefit_slopes=benefit_slopes,
        dropped_rows=tuple(dropped),
    )


def write_csv(d: Dataset, path, schema: Mapping[str, str] | None = None):
    """Write the numeric columns with 17 significant digits (bit-exact round trip)."""
    schema = dict(schema or {"x": "x", "y": "y", "a": "a", "t": "t", "cluster": "cluster"})
    roles = [r for r in ("x", "a", "y", "t", "cluster") if getattr(d, r) is not None]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema[r] for r in roles])
        for i in range(d.n):
            out = []
            for r in roles:
                v = getattr(d, r)[i]
                out.append(v if r == "cluster" else format(float(v), ".17g"))
            writer.writerow(out)

"""Simulation designs, their analytic truths, and the Monte Carlo harness."""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate as sp_integrate
from scipy import stats

from .core_data import Dataset, Design
from .exceptions import NoAnalyticTruth, SizeMismatch


class DgpId(str, enum.Enum):
    ADDITIVE = "Additive"
    SCALE_SHIFT = "ScaleShift"
    HEAVY_TAIL = "HeavyTail"
    KINK_LOCATION = "KinkLocation"
    KINK_SCALE = "KinkScale"
    FUZZY_COMPLIANCE = "FuzzyCompliance"


_DEFAULTS = {
    DgpId.ADDITIVE: {"tau": 0.5},
    DgpId.SCALE_SHIFT: {"sigma0": 1.0, "sigma1": 2.0},
    DgpId.HEAVY_TAIL: {"tau": 0.5},
    DgpId.KINK_LOCATION: {"slope_right": 1.0, "slope_left": 0.0},
    DgpId.KINK_SCALE: {"scale_kink": 0.5},
    DgpId.FUZZY_COMPLIANCE: {
        "tau": 0.5, "p_complier": 0.6, "p_always": 0.2, "always_shift": 1.0, "never_shift": -1.0,
    },
}


@dataclass(frozen=True)
class DgpSpec:
    id: DgpId
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "id", DgpId(self.id))
        if self.n < 50:
            raise ValueError("n must be at least 50")
        merged = {**_DEFAULTS[self.id], **self.params}
        unknown = set(merged) - set(_DEFAULTS[self.id])
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)} for {self.id.value}")
        if self.id is DgpId.FUZZY_COMPLIANCE:
            if not (0 < merged["p_complier"] and merged["p_complier"] + merged["p_always"] <= 1):
                raise ValueError("compliance shares must be a probability split")
        object.__setattr__(self, "params", merged)

    def with_seed(self, seed):
        return DgpSpec(self.id, self.n, seed, dict(self.params))


def conditional_mean(x):
    """Smooth baseline ``0.5 x + x^2`` shared by the discontinuity designs."""
    return 0.5 * x + x**2


def dgp_sample(spec: DgpSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    n, p = spec.n, spec.params
    x = rng.uniform(-1.0, 1.0, n)
    eps = rng.standard_normal(n)
    right = (x >= 0).astype(float)
    if spec.id is DgpId.ADDITIVE:
        y = conditional_mean(x) + p["tau"] * right + eps
        return Dataset(x, y, 0.0, Design.SHARP_RDD, a=right)
    if spec.id is DgpId.SCALE_SHIFT:
        sigma = np.where(right == 1, p["sigma1"], p["sigma0"])
        return Dataset(x, conditional_mean(x) + sigma * eps, 0.0, Design.SHARP_RDD, a=right)
    if spec.id is DgpId.HEAVY_TAIL:
        noise = (1 + 0.3 * np.abs(x)) * (1 + 0.6 * right) * (np.exp(eps) - math.exp(0.5))
        return Dataset(x, conditional_mean(x) + p["tau"] * right + noise, 0.0, Design.SHARP_RDD, a=right)
    if spec.id is DgpId.KINK_LOCATION:
        y = p["slope_right"] * np.maximum(x, 0) + p["slope_left"] * np.minimum(x, 0) + eps
        return Dataset(x, y, 0.0, Design.SHARP_KINK, t=np.maximum(x, 0), benefit_slopes=(0.0, 1.0))
    if spec.id is DgpId.KINK_SCALE:
        y = (1 + p["scale_kink"] * np.maximum(x, 0)) * eps
        return Dataset(x, y, 0.0, Design.SHARP_KINK, t=np.maximum(x, 0), benefit_slopes=(0.0, 1.0))
    # FuzzyCompliance: always-takers, never-takers and compliers with distinct baselines
    draw = rng.uniform(size=n)
    complier = draw < p["p_complier"]
    always = (draw >= p["p_complier"]) & (draw < p["p_complier"] + p["p_always"])
    never = ~(complier | always)
    a = (always | (complier & (x >= 0))).astype(float)
    base = conditional_mean(x) + eps + p["always_shift"] * always + p["never_shift"] * never
    y = base + p["tau"] * a
    return Dataset(x, y, 0.0, Design.FUZZY_RDD, a=a)


def _normal_second_moment(trim_level):
    """``int_trim^{1-trim} Phi^{-1}(u)^2 du`` in closed form."""
    if trim_level <= 0:
        return 1.0
    a = stats.norm.ppf(1 - trim_level)
    return float((2 * stats.norm.cdf(a) - 1) - 2 * a * stats.norm.pdf(a))


def _quad(fn, trim_level):
    lo, hi = trim_level, 1 - trim_level
    val, _ = sp_integrate.quad(fn, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-12)
    return float(val)


def true_effect_curve(spec: DgpSpec):
    """Analytic quantile-effect (or quantile-slope-effect) function ``u -> value``."""
    p = spec.params
    if spec.id in (DgpId.ADDITIVE, DgpId.FUZZY_COMPLIANCE):
        return lambda u: np.full_like(np.asarray(u, dtype=float), p["tau"])
    if spec.id is DgpId.SCALE_SHIFT:
        return lambda u: (p["sigma1"] - p["sigma0"]) * stats.norm.ppf(u)
    if spec.id is DgpId.HEAVY_TAIL:
        # at the cutoff Y0 = e^Z - e^0.5 and Y1 = tau + 1.6 (e^Z - e^0.5)
        return lambda u: p["tau"] + 0.6 * (np.exp(stats.norm.ppf(u)) - math.exp(0.5))
    if spec.id is DgpId.KINK_LOCATION:
        return lambda u: np.full_like(np.asarray(u, dtype=float), p["slope_right"] - p["slope_left"])
    if spec.id is DgpId.KINK_SCALE:
        return lambda u: p["scale_kink"] * stats.norm.ppf(u)
    raise NoAnalyticTruth(spec.id.value)


def true_effects(spec: DgpSpec, trim_level=0.0):
    """``(psi, tau)`` of the limiting effect curve over ``[trim, 1 - trim]``.

    For kink designs these are the slope analogues.
    """
    p = spec.params
    length = 1 - 2 * trim_level
    if spec.id in (DgpId.ADDITIVE, DgpId.FUZZY_COMPLIANCE):
        return abs(p["tau"]) * math.sqrt(length), p["tau"] * length
    if spec.id is DgpId.KINK_LOCATION:
        delta = p["slope_right"] - p["slope_left"]
        return abs(delta) * math.sqrt(length), delta * length
    if spec.id is DgpId.SCALE_SHIFT:
        c = p["sigma1"] - p["sigma0"]
        return abs(c) * math.sqrt(_normal_second_moment(trim_level)), 0.0
    if spec.id is DgpId.KINK_SCALE:
        return abs(p["scale_kink"]) * math.sqrt(_normal_second_moment(trim_level)), 0.0
    curve = true_effect_curve(spec)
    psi2 = _quad(lambda u: float(curve(u)) ** 2, trim_level)
    tau = _quad(lambda u: float(curve(u)), trim_level)
    return math.sqrt(psi2), tau


def limiting_samples(spec: DgpSpec, m, seed=0):
    """Draws from the two limiting outcome laws at the cutoff (discontinuity designs)."""
    rng = np.random.default_rng(seed)
    z0, z1 = rng.standard_normal(m), rng.standard_normal(m)
    p = spec.params
    if spec.id in (DgpId.ADDITIVE, DgpId.FUZZY_COMPLIANCE):
        return z0, p["tau"] + z1
    if spec.id is DgpId.SCALE_SHIFT:
        return p["sigma0"] * z0, p["sigma1"] * z1
    if spec.id is DgpId.HEAVY_TAIL:
        return np.exp(z0) - math.exp(0.5), p["tau"] + 1.6 * (np.exp(z1) - math.exp(0.5))
    raise NoAnalyticTruth(spec.id.value)


def empirical_wasserstein_oracle(sample0, sample1):
    """Exact 2-Wasserstein distance between two equal-size empirical laws."""
    s0 = np.sort(np.asarray(sample0, dtype=float))
    s1 = np.sort(np.asarray(sample1, dtype=float))
    if s0.shape != s1.shape:
        raise SizeMismatch(f"samples have sizes {s0.shape[0]} and {s1.shape[0]}")
    return float(math.sqrt(np.mean((s1 - s0) ** 2)))


# Monte Carlo harness ---------------------------------------------------------

# Bandwidth constant for simulations: h = 1.5 n^(-1/5) puts roughly 188 and
# 1189 observations per side inside the window at n = 10^3 and 10^4.
SIM_BANDWIDTH_CONSTANT = 1.5
INTERVAL_METHODS = ("conservative", "band")
TEST_METHODS = ("cantelli", "eigenvalue")
MC_COLUMNS = ("dgp", "n", "gamma", "method", "coverage", "mean_width", "reps", "mc_se")


@dataclass(frozen=True)
class McSettings:
    """Estimator and inference settings shared by every replicate."""

    order: int = 2
    kernel: str = "triangular"
    bandwidth_constant: float = SIM_BANDWIDTH_CONSTANT
    bandwidth: float | None = None
    B: int = 1000
    B_mc: int = 20_000
    alpha: float = 0.05
    K: int = 10


@dataclass(frozen=True)
class McRow:
    dgp: str
    n: int
    gamma: float
    method: str
    coverage: float
    mean_width: float
    reps: int
    mc_se: float
    mean_psi: float
    outcomes: tuple = field(default=(), repr=False)
    widths: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class McReport:
    """Per-(n, gamma, method) coverage summaries.

    For interval methods ``coverage`` is the share of replicates whose
    interval contains the trimmed target; for test methods it is the
    rejection rate and ``mean_width`` the mean critical value.
    """

    rows: tuple
    seed: int

    def row(self, n, gamma, method):
        for r in self.rows:
            if r.n == n and math.isclose(r.gamma, gamma) and r.method == method:
                return r
        raise KeyError((n, gamma, method))

    def to_csv(self, path):
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(MC_COLUMNS)
            for r in self.rows:
                w.writerow([
                    r.dgp, r.n, format(r.gamma, ".17g"), r.method, format(r.coverage, ".17g"),
                    format(r.mean_width, ".17g"), r.reps, format(r.mc_se, ".17g"),
                ])


def replicate_seed(seed, n, rep):
    """Integer seed of one replicate, derived from the run seed, n and index."""
    return int(np.random.SeedSequence([int(seed), int(n), int(rep)]).generate_state(1)[0])


def fit_config_for(d: Dataset, settings: McSettings, trim_level):
    from .locfit import FitConfig, default_bandwidth, default_u_grid, default_y_grid

    h = settings.bandwidth or default_bandwidth(d.x, settings.bandwidth_constant)
    return FitConfig(d.cutoff, h, settings.order, settings.kernel,
                     default_y_grid(d.y), default_u_grid(), trim_level)


def _one_replicate(args):
    import warnings

    from .inference import run_inference
    from .pipeline import estimate_kink, estimate_rdd

    spec, gammas, methods, settings, truths = args
    d = dgp_sample(spec)
    out = []
    for g in gammas:
        cfg = fit_config_for(d, settings, g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = estimate_kink(d, cfg, settings.K) if d.design.is_kink else estimate_rdd(d, cfg, settings.K)
            rep = run_inference(fit, B=settings.B, B_mc=settings.B_mc, alpha=settings.alpha, seed=spec.seed)
        psi = fit.summary.psi_prime if d.design.is_kink else fit.summary.psi
        target = truths[g]
        res = {}
        for m in methods:
            if m == "conservative":
                iv = rep.conservative
                res[m] = (float(iv.contains(target)), iv.width)
            elif m == "band":
                iv = rep.band
                res[m] = (float(iv.contains(target)), iv.width)
            elif m == "cantelli":
                res[m] = (float(rep.cantelli.rejected), rep.cantelli.critical)
            elif m == "eigenvalue":
                t = rep.eigen
                res[m] = (float(t.rejected), t.critical) if t is not None else (0.0, float("nan"))
            else:
                raise ValueError(f"unknown method {m!r}")
        out.append((g, psi, res))
    return out


def run_mc(dgp, n_list, gamma_list, methods=INTERVAL_METHODS, reps=500, seed=0,
           settings: McSettings | None = None, params=None, workers=1) -> McReport:
    """Coverage and width of the intervals (or rejection rates of the tests).

    Replicate ``r`` at sample size ``n`` uses the dataset seed
    :func:`replicate_seed` ``(seed, n, r)``; results are gathered in
    replicate order, so the report does not depend on ``workers``.
    """
    settings = settings or McSettings()
    dgp = DgpId(dgp)
    params = dict(params or {})
    methods = tuple(methods)
    gammas = tuple(float(g) for g in gamma_list)
    rows = []
    for n in n_list:
        base = DgpSpec(dgp, int(n), 0, params)
        truths = {}
        for g in gammas:
            try:
                truths[g] = true_effects(base, g)[0] ** 2
            except NoAnalyticTruth:
                truths[g] = float("nan")
        jobs = [(base.with_seed(replicate_seed(seed, n, r)), gammas, methods, settings, truths)
                for r in range(reps)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_one_replicate, jobs, chunksize=max(1, reps // (4 * workers))))
        else:
            results = [_one_replicate(j) for j in jobs]
        for gi, g in enumerate(gammas):
            psis = np.array([res[gi][1] for res in results])
            for m in methods:
                hits = np.array([res[gi][2][m][0] for res in results])
                widths = np.array([res[gi][2][m][1] for res in results])
                cov = float(hits.mean())
                rows.append(McRow(
                    dgp.value, int(n), g, m, cov, float(np.nanmean(widths)) if np.isfinite(widths).any() else float("nan"),
                    reps, math.sqrt(max(cov * (1 - cov), 0.0) / reps), float(psis.mean()),
                    tuple(hits.tolist()), tuple(widths.tolist()),
                ))
    return McReport(tuple(rows), int(seed))


def default_workers():
    return max(1, (os.cpu_count() or 1))

"""Command-line interface: ``distdisc {rdd,fuzzy-rdd,kink,fuzzy-kink,simulate}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core_data import Design, load_csv, validate
from .exceptions import DistDiscError
from .effects import contribution_curve, l_moments
from .inference import DEFAULT_B, DEFAULT_MC_DRAWS, run_inference
from .locfit import FitConfig, Kernel, default_bandwidth, default_u_grid, default_y_grid
from .pipeline import describe_window, estimate_kink, estimate_rdd
from .quantiles import QuantileCurve
from .simlab import INTERVAL_METHODS, TEST_METHODS, DgpId, DgpSpec, McSettings, run_mc, true_effects

SCHEMA_VERSION = "1"
DESIGN_COMMANDS = {
    "rdd": Design.SHARP_RDD,
    "fuzzy-rdd": Design.FUZZY_RDD,
    "kink": Design.SHARP_KINK,
    "fuzzy-kink": Design.FUZZY_KINK,
}


class ConfigError(DistDiscError):
    stage = "config"


class OutputError(DistDiscError):
    stage = "output"


# formatting --------------------------------------------------------------------

def fmt(value):
    """CSV float format: 17 significant digits, 'nan' for missing."""
    if value is None:
        return ""
    value = float(value)
    return "nan" if math.isnan(value) else format(value, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def load_schema(name):
    text = resources.files("distdisc").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def write_json(path, payload, schema):
    payload = _jsonable(payload)
    jsonschema.validate(payload, load_schema(schema))
    Path(path).write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


# argument parsing ----------------------------------------------------------------

def _alpha(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return v


def _trim(text):
    v = float(text)
    if not 0 <= v < 0.5:
        raise argparse.ArgumentTypeError("trim must lie in [0, 0.5)")
    return v


def _bandwidth_rule(text):
    if text == "sd":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("bandwidth rule is 'sd' or a positive constant") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("bandwidth constant must be positive")
    return v


def _add_estimation_flags(p, design):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--x-col", default="x", help="running variable column")
    p.add_argument("--y-col", default="y", help="outcome column")
    p.add_argument("--a-col", help="treatment indicator column (default 'a' for fuzzy designs)")
    p.add_argument("--t-col", help="benefit column (default 't' when kink slopes are not declared)")
    p.add_argument("--cluster-col", help="cluster id column, carried through but not used for weighting")
    p.add_argument("--cutoff", type=float, default=0.0)
    p.add_argument("--order", type=int, default=2, help="local polynomial order for CDF fits")
    p.add_argument("--kernel", choices=[k.value for k in Kernel], default="triangular")
    bw = p.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float, help="fixed bandwidth h")
    bw.add_argument("--bandwidth-rule", type=_bandwidth_rule, default=None,
                    help="'sd' (h = sd(x) n^-1/5, default) or a constant c for h = c n^-1/5")
    p.add_argument("--trim", type=_trim, default=0.0)
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--boot", type=int, default=DEFAULT_B, help="bootstrap replicates")
    p.add_argument("--mc-draws", type=int, default=DEFAULT_MC_DRAWS,
                   help="Monte Carlo draws for the eigenvalue test")
    p.add_argument("--interval", choices=["conservative", "band", "both"], default="conservative")
    p.add_argument("--lmoments", type=int, default=10, metavar="K")
    p.add_argument("--no-bias-correction", action="store_true")
    p.add_argument("--y-grid-size", type=int, default=401)
    p.add_argument("--u-grid-size", type=int, default=999)
    if design is Design.SHARP_KINK:
        p.add_argument("--benefit-slopes", type=float, nargs=2, metavar=("LEFT", "RIGHT"),
                       help="declared slopes of the benefit rule left and right of the cutoff")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="distdisc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, design in DESIGN_COMMANDS.items():
        p = sub.add_parser(name, help=f"{design.value} estimation")
        _add_estimation_flags(p, design)
    s = sub.add_parser("simulate", help="Monte Carlo coverage study")
    s.add_argument("--dgp", choices=[d.value for d in DgpId], default="Additive")
    s.add_argument("--n", type=int, nargs="+", default=[1000])
    s.add_argument("--gamma", type=_trim, nargs="+", default=[0.1])
    s.add_argument("--methods", nargs="+", choices=list(INTERVAL_METHODS + TEST_METHODS),
                   default=list(INTERVAL_METHODS))
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--tau", type=float, help="override the effect size of Additive/HeavyTail/FuzzyCompliance")
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--kernel", choices=[k.value for k in Kernel], default="triangular")
    bw = s.add_mutually_exclusive_group()
    bw.add_argument("--bandwidth", type=float)
    bw.add_argument("--bandwidth-rule", type=_bandwidth_rule, default=1.5)
    s.add_argument("--boot", type=int, default=DEFAULT_B)
    s.add_argument("--mc-draws", type=int, default=20_000)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    return parser


# estimation commands -------------------------------------------------------------

def _schema_map(args, design):
    schema = {"x": args.x_col, "y": args.y_col}
    if args.a_col or design is Design.FUZZY_RDD:
        schema["a"] = args.a_col or "a"
    needs_t = design is Design.FUZZY_KINK or (
        design is Design.SHARP_KINK and getattr(args, "benefit_slopes", None) is None)
    if args.t_col or needs_t:
        schema["t"] = args.t_col or "t"
    if args.cluster_col:
        schema["cluster"] = args.cluster_col
    return schema


def _fit_config(args, d):
    if args.bandwidth is not None:
        h = args.bandwidth
    else:
        rule = args.bandwidth_rule
        h = default_bandwidth(d.x, None if rule in (None, "sd") else rule)
    return FitConfig(
        cutoff=args.cutoff, bandwidth=h, order=args.order, kernel=args.kernel,
        y_grid=default_y_grid(d.y, args.y_grid_size), u_grid=default_u_grid(args.u_grid_size),
        trim=args.trim,
    )


def _interval_payload(iv):
    out = {"lo": iv.lo, "hi": iv.hi, "estimate": iv.estimate, "alpha": iv.alpha, "method": iv.method}
    for key in ("half_width", "s_hat", "c_const", "c_hat"):
        if key in iv.details:
            out[key] = iv.details[key]
    return out


def _test_payload(t):
    if t is None:
        return None
    out = {"statistic": t.statistic, "critical": t.critical, "alpha": t.alpha,
           "rejected": t.rejected, "method": t.method}
    out.update({k: v for k, v in t.details.items()})
    return out


def _run_design(args, design, out_dir, caught):
    stage = "ingestion"
    try:
        slopes = getattr(args, "benefit_slopes", None)
        d = load_csv(args.input, _schema_map(args, design), design, args.cutoff,
                     benefit_slopes=tuple(slopes) if slopes else None)
    except FileNotFoundError as exc:
        raise _Staged("ingestion", exc) from exc
    report = validate(d)
    stage = "fit"
    cfg = _fit_config(args, d)
    bias = not args.no_bias_correction
    if design.is_kink:
        fit = estimate_kink(d, cfg, args.lmoments, bias_correction=bias)
        s = fit.summary
        curve = fit.dq_prime
        estimates = {
            "estimand": "wasserstein_derivative", "psi": s.psi_prime, "tau": s.tau_prime,
            "first_stage": fit.first_stage,
        }
    else:
        fit = estimate_rdd(d, cfg, args.lmoments, bias_correction=bias)
        s = fit.summary
        curve = fit.dq
        estimates = {
            "estimand": "wasserstein", "psi": s.psi, "tau": s.tau, "first_stage": fit.first_stage,
            "r2_1_mean_plugin": s.extras.get("r2_1_mean_plugin"),
        }
    estimates.update({
        "gamma": s.gamma, "rho": s.rho, "psi2_plus": s.psi2_plus, "psi2_minus": s.psi2_minus,
        "tau_mean": fit.tau_mean, "trim": s.trim, "undefined": list(s.undefined),
    })
    stage = "inference"
    try:
        inf = run_inference(fit, B=args.boot, B_mc=args.mc_draws, alpha=args.alpha, seed=args.seed)
    except DistDiscError:
        raise
    except ValueError as exc:
        raise _Staged(stage, exc) from exc
    intervals = {}
    if args.interval in ("conservative", "both"):
        intervals["conservative"] = _interval_payload(inf.conservative)
    if args.interval in ("band", "both"):
        intervals["band"] = _interval_payload(inf.band)
    for iv in intervals.values():
        # boundary re-check of core invariants
        if not (iv["lo"] <= iv["estimate"] <= iv["hi"]):
            raise OutputError("interval does not contain the point estimate")
    if abs(estimates["tau"]) > estimates["psi"] * (1 + 1e-10) + 1e-12:
        raise OutputError("|tau| exceeds psi")

    summary = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "command": args.command,
        "design": design.value,
        "seed": args.seed,
        "config": _config_echo(args, cfg),
        "window": describe_window(d, cfg),
        "estimates": estimates,
        "lmoments": {"K": s.K, "shares": list(s.r2), "tail": s.tail, "buckets": s.buckets()},
        "intervals": intervals,
        "tests": {"eigenvalue": _test_payload(inf.eigen), "cantelli": _test_payload(inf.cantelli)},
        "warnings": list(report.warnings) + [str(w.message) for w in caught] + (
            ["cluster column is carried through; the bootstrap treats rows as independent"]
            if d.cluster is not None else []),
    }
    stage = "output"
    artifacts = []
    write_json(out_dir / "summary.json", summary, "summary")
    artifacts.append("summary.json")
    _write_curves(out_dir / "curves.csv", fit, curve, s, inf)
    artifacts.append("curves.csv")
    _write_lmoments(out_dir / "lmoments.csv", fit, curve, s)
    artifacts.append("lmoments.csv")
    return artifacts


def _config_echo(args, cfg):
    echo = {k: v for k, v in vars(args).items() if k not in ("func",)}
    echo["bandwidth_used"] = cfg.bandwidth
    echo["input"] = str(args.input)
    return echo


def _write_curves(path, fit, curve, s, inf):
    try:
        contrib = contribution_curve(curve).values
    except DistDiscError:
        contrib = np.full(curve.values.shape, np.nan)
    band_lo = inf.band.details["band_lo"]
    band_hi = inf.band.details["band_hi"]
    if hasattr(fit, "q1"):
        header = ["u", "Q0", "Q1", "dQ", "contribution", "band_lo", "band_hi"]
        cols = [curve.u_grid, fit.q0.values, fit.q1.values, curve.values, contrib, band_lo, band_hi]
    else:
        header = ["u", "Q", "dQprime", "contribution", "band_lo", "band_hi"]
        cols = [curve.u_grid, fit.q_pooled.values, curve.values, contrib, band_lo, band_hi]
    write_rows(path, header, ([fmt(c[i]) for c in cols] for i in range(curve.u_grid.shape[0])))


def _write_lmoments(path, fit, curve, s):
    K = s.K
    if hasattr(fit, "q1"):
        lam1 = l_moments(fit.q1, K).values
        lam0 = l_moments(fit.q0, K).values
    else:
        lam1 = lam0 = np.full(K, np.nan)
    delta = l_moments(curve, K).values
    rows = []
    for k in range(1, 4):
        if k <= K:
            rows.append([str(k), fmt(lam1[k - 1]), fmt(lam0[k - 1]), fmt(delta[k - 1]), fmt(s.r2[k - 1])])
    rows.append([">=4", "", "", "", fmt(s.buckets()[">=4"])])
    write_rows(path, ["k", "lambda_treated", "lambda_untreated", "delta", "share"], rows)


# simulate -------------------------------------------------------------------------

def _run_simulate(args, out_dir, caught):
    params = {}
    if args.tau is not None:
        params["tau"] = args.tau
    settings = McSettings(
        order=args.order, kernel=args.kernel,
        bandwidth_constant=None if args.bandwidth_rule == "sd" else args.bandwidth_rule,
        bandwidth=args.bandwidth,
        B=args.boot, B_mc=args.mc_draws, alpha=args.alpha,
    )
    try:
        DgpSpec(args.dgp, max(args.n), 0, params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = run_mc(args.dgp, args.n, args.gamma, tuple(args.methods), args.reps, args.seed,
                    settings, params, workers=args.workers)
    report.to_csv(out_dir / "mc_report.csv")
    cells = []
    for n in args.n:
        base = DgpSpec(args.dgp, n, 0, params)
        for g in args.gamma:
            row = report.row(n, g, args.methods[0])
            target = true_effects(base, g)[0] ** 2
            cells.append({"n": n, "gamma": g, "mean_psi": row.mean_psi, "target_psi2": target})
    return ["mc_report.csv"], {"reps": args.reps, "cells": cells, "config": vars(args)}


# entry point ----------------------------------------------------------------------

class _Staged(Exception):
    def __init__(self, stage, exc):
        super().__init__(str(exc))
        self.stage = stage
        self.original = exc


def _write_error(out_dir, exc, stage, code):
    payload = {
        "schema_version": SCHEMA_VERSION,
        "error": type(exc).__name__,
        "stage": stage,
        "message": str(exc),
        "exit_code": code,
    }
    try:
        write_json(out_dir / "error.json", payload, "error")
    except OSError:
        pass
    print(f"distdisc: {stage} error: {exc}", file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"distdisc: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    start = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "simulate":
                artifacts, extra = _run_simulate(args, out_dir, caught)
            else:
                artifacts = _run_design(args, DESIGN_COMMANDS[args.command], out_dir, caught)
                extra = {}
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "command": args.command,
            "seed": args.seed,
            "artifacts": artifacts,
            "runtime_seconds": time.perf_counter() - start,
            **extra,
        }
        write_json(out_dir / "manifest.json", manifest, "manifest")
    except DistDiscError as exc:
        _write_error(out_dir, exc, exc.stage, 1)
        return 1
    except _Staged as exc:
        _write_error(out_dir, exc.original, exc.stage, 1)
        return 1
    except (ValueError, OSError, jsonschema.ValidationError) as exc:
        _write_error(out_dir, exc, "internal", 1)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

import csv
import math

import numpy as np
import pytest
from scipy import integrate, stats

from distdisc.core_data import Design
from distdisc.exceptions import NoAnalyticTruth, SizeMismatch
from distdisc.simlab import (
    DgpId,
    DgpSpec,
    McSettings,
    dgp_sample,
    empirical_wasserstein_oracle,
    limiting_samples,
    replicate_seed,
    run_mc,
    true_effect_curve,
    true_effects,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        DgpSpec("Additive", 10)
    with pytest.raises(ValueError):
        DgpSpec("Additive", 100, params={"sigma": 1})
    with pytest.raises(ValueError):
        DgpSpec("FuzzyCompliance", 100, params={"p_complier": 0.9, "p_always": 0.2})
    assert DgpSpec("ScaleShift", 100).params == {"sigma0": 1.0, "sigma1": 2.0}


@pytest.mark.parametrize("dgp", list(DgpId))
def test_samples_are_seed_deterministic(dgp):
    a = dgp_sample(DgpSpec(dgp, 500, 4))
    b = dgp_sample(DgpSpec(dgp, 500, 4))
    c = dgp_sample(DgpSpec(dgp, 500, 5))
    assert np.array_equal(a.y, b.y) and not np.array_equal(a.y, c.y)
    assert a.x.min() >= -1 and a.x.max() <= 1


def test_designs_of_generated_data():
    assert dgp_sample(DgpSpec("Additive", 100)).design is Design.SHARP_RDD
    assert dgp_sample(DgpSpec("FuzzyCompliance", 100)).design is Design.FUZZY_RDD
    k = dgp_sample(DgpSpec("KinkScale", 100))
    assert k.design is Design.SHARP_KINK and k.benefit_slopes == (0.0, 1.0)


def test_fuzzy_compliance_shares():
    d = dgp_sample(DgpSpec("FuzzyCompliance", 200_000, 1))
    left = d.a[d.x < 0].mean()
    right = d.a[d.x >= 0].mean()
    assert left == pytest.approx(0.2, abs=0.01)
    assert right == pytest.approx(0.8, abs=0.01)


@pytest.mark.parametrize("trim_level", [0.0, 0.05, 0.1])
@pytest.mark.parametrize("dgp", ["Additive", "ScaleShift", "HeavyTail", "KinkLocation", "KinkScale"])
def test_truths_match_quadrature(dgp, trim_level):
    spec = DgpSpec(dgp, 100)
    f = true_effect_curve(spec)
    lo, hi = trim_level, 1 - trim_level
    psi2, _ = integrate.quad(lambda u: float(f(u)) ** 2, lo, hi, limit=200)
    tau, _ = integrate.quad(lambda u: float(f(u)), lo, hi, limit=200)
    psi, t = true_effects(spec, trim_level)
    assert psi**2 == pytest.approx(psi2, rel=1e-7)
    assert t == pytest.approx(tau, abs=1e-8)


def test_scale_shift_truth_is_one():
    assert true_effects(DgpSpec("ScaleShift", 100))[0] == pytest.approx(1.0)


def test_truths_agree_with_empirical_wasserstein():
    """Large-sample W2 between the limiting laws approaches the analytic truth."""
    for dgp in ("Additive", "ScaleShift", "HeavyTail"):
        spec = DgpSpec(dgp, 100)
        z0, z1 = limiting_samples(spec, 400_000, seed=3)
        emp = empirical_wasserstein_oracle(z0, z1)
        assert emp == pytest.approx(true_effects(spec)[0], rel=0.02)


def test_limiting_samples_need_analytic_law():
    with pytest.raises(NoAnalyticTruth):
        limiting_samples(DgpSpec("KinkScale", 100), 10)


def test_empirical_oracle_checks_sizes():
    assert empirical_wasserstein_oracle([0, 1], [1, 2]) == 1.0
    with pytest.raises(SizeMismatch):
        empirical_wasserstein_oracle([0, 1], [1])


def test_replicate_seed_is_stable():
    assert replicate_seed(0, 1000, 3) == replicate_seed(0, 1000, 3)
    assert len({replicate_seed(0, 1000, r) for r in range(100)}) == 100
    assert replicate_seed(0, 1000, 3) != replicate_seed(1, 1000, 3)


def test_small_mc_run_and_csv(tmp_path):
    settings = McSettings(B=60, B_mc=2000)
    rep = run_mc("Additive", [400], [0.1], ("conservative", "band", "cantelli"), reps=3,
                 seed=2, settings=settings)
    assert len(rep.rows) == 3
    row = rep.row(400, 0.1, "conservative")
    assert 0 <= row.coverage <= 1 and row.reps == 3 and len(row.outcomes) == 3
    path = tmp_path / "mc.csv"
    rep.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["dgp", "n", "gamma", "method", "coverage", "mean_width", "reps", "mc_se"]
    assert float(rows[1][5]) == row.mean_width  # 17 significant digits round-trip
    again = run_mc("Additive", [400], [0.1], ("conservative",), reps=3, seed=2, settings=settings)
    assert again.row(400, 0.1, "conservative").widths == row.widths
    with pytest.raises(KeyError):
        rep.row(500, 0.1, "band")


def test_mc_se_is_binomial():
    settings = McSettings(B=60, B_mc=2000)
    rep = run_mc("Additive", [300], [0.0], ("conservative",), reps=2, settings=settings)
    r = rep.rows[0]
    assert r.mc_se == pytest.approx(math.sqrt(r.coverage * (1 - r.coverage) / 2))

import csv
import json
import math
import subprocess
import sys

import jsonschema
import pytest

from distdisc.cli import build_parser, fmt, load_schema, main
from distdisc.core_data import Dataset, Design, write_csv
from distdisc.simlab import DgpSpec, dgp_sample

FAST = ["--boot", "100", "--mc-draws", "2000", "--u-grid-size", "199", "--y-grid-size", "201"]


@pytest.fixture(scope="module")
def csvs(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    out = {}
    for name, dgp, n in [("rdd", "Additive", 2000), ("frdd", "FuzzyCompliance", 4000),
                         ("kink", "KinkScale", 4000)]:
        path = root / f"{name}.csv"
        write_csv(dgp_sample(DgpSpec(dgp, n, 1)), path)
        out[name] = path
    return out


def _read_json(path):
    return json.loads(path.read_text())


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(float("nan")) == "nan"
    assert float(fmt(1 / 3)) == 1 / 3


def test_parser_rejects_bad_flags():
    p = build_parser()
    for bad in (["rdd", "--input", "a", "--out", "o", "--alpha", "1.5"],
                ["rdd", "--input", "a", "--out", "o", "--trim", "0.5"],
                ["rdd", "--input", "a", "--out", "o", "--bandwidth", "1", "--bandwidth-rule", "sd"],
                ["simulate", "--out", "o", "--dgp", "Nope"]):
        with pytest.raises(SystemExit):
            p.parse_args(bad)


def test_rdd_command_writes_valid_artifacts(csvs, tmp_path):
    out = tmp_path / "o"
    code = main(["rdd", "--input", str(csvs["rdd"]), "--out", str(out), "--interval", "both",
                 "--bandwidth-rule", "1.5", *FAST])
    assert code == 0
    summary = _read_json(out / "summary.json")
    jsonschema.validate(summary, load_schema("summary"))
    jsonschema.validate(_read_json(out / "manifest.json"), load_schema("manifest"))
    est = summary["estimates"]
    assert abs(est["tau"]) <= est["psi"] + 1e-12
    assert set(summary["intervals"]) == {"conservative", "band"}
    with open(out / "curves.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["u", "Q0", "Q1", "dQ", "contribution", "band_lo", "band_hi"]
    assert len(rows) == 200
    assert all(float(r[3]) == pytest.approx(float(r[2]) - float(r[1])) for r in rows[1:])
    with open(out / "lmoments.csv", newline="") as fh:
        lm = list(csv.reader(fh))
    assert [r[0] for r in lm[1:]] == ["1", "2", "3", ">=4"]
    assert sum(float(r[4]) for r in lm[1:]) == pytest.approx(1.0, abs=1e-9)


def test_fuzzy_and_kink_commands(csvs, tmp_path):
    assert main(["fuzzy-rdd", "--input", str(csvs["frdd"]), "--out", str(tmp_path / "f"),
                 "--order", "1", *FAST]) == 0
    s = _read_json(tmp_path / "f" / "summary.json")
    assert s["design"] == "FuzzyRDD" and 0.4 < s["estimates"]["first_stage"] < 0.8
    assert main(["kink", "--input", str(csvs["kink"]), "--out", str(tmp_path / "k"), "--order", "1",
                 "--bandwidth", "0.4", "--trim", "0.05", "--benefit-slopes", "0", "1", *FAST]) == 0
    k = _read_json(tmp_path / "k" / "summary.json")
    assert k["estimates"]["estimand"] == "wasserstein_derivative"
    assert k["intervals"]["conservative"]["method"] == "kink-conservative"
    assert main(["fuzzy-kink", "--input", str(csvs["kink"]), "--out", str(tmp_path / "fk"),
                 "--order", "1", "--bandwidth", "0.4", "--trim", "0.05", *FAST]) == 0


def test_kink_without_benefit_column(tmp_path):
    d = dgp_sample(DgpSpec("KinkLocation", 3000, 1))
    path = tmp_path / "k.csv"
    write_csv(Dataset(d.x, d.y, 0.0, Design.SHARP_KINK, benefit_slopes=(0.0, 1.0)), path)
    assert "t" not in path.read_text().splitlines()[0].split(",")
    out = tmp_path / "o"
    assert main(["kink", "--input", str(path), "--out", str(out), "--order", "1", "--bandwidth", "0.5",
                 "--benefit-slopes", "0", "1", *FAST]) == 0
    # without declared slopes the benefit column is required
    assert main(["kink", "--input", str(path), "--out", str(tmp_path / "e"), *FAST]) == 1
    assert _read_json(tmp_path / "e" / "error.json")["stage"] == "ingestion"


def test_cluster_column_is_carried_through(tmp_path):
    path = tmp_path / "c.csv"
    d = dgp_sample(DgpSpec("Additive", 2000, 1))
    lines = ["x,y,g"] + [f"{x!r},{y!r},{i % 7}" for i, (x, y) in enumerate(zip(d.x.tolist(), d.y.tolist()))]
    path.write_text("\n".join(lines) + "\n")
    out = tmp_path / "o"
    assert main(["rdd", "--input", str(path), "--out", str(out), "--cluster-col", "g", *FAST]) == 0
    assert any("cluster" in w for w in _read_json(out / "summary.json")["warnings"])


def test_same_seed_same_output(csvs, tmp_path):
    args = ["rdd", "--input", str(csvs["rdd"]), "--seed", "7", *FAST]
    main([*args, "--out", str(tmp_path / "a")])
    main([*args, "--out", str(tmp_path / "b")])
    a = _read_json(tmp_path / "a" / "summary.json")
    b = _read_json(tmp_path / "b" / "summary.json")
    assert a["intervals"] == b["intervals"] and a["tests"] == b["tests"]
    assert (tmp_path / "a" / "curves.csv").read_text() == (tmp_path / "b" / "curves.csv").read_text()


@pytest.mark.parametrize("argv,stage", [
    (["--x-col", "nope"], "ingestion"),
    (["--cutoff", "5"], "ingestion"),
    (["--bandwidth", "0.001"], "fit"),
])
def test_errors_write_error_json(csvs, tmp_path, argv, stage):
    out = tmp_path / "e"
    code = main(["rdd", "--input", str(csvs["rdd"]), "--out", str(out), *FAST, *argv])
    assert code != 0
    err = _read_json(out / "error.json")
    jsonschema.validate(err, load_schema("error"))
    assert err["stage"] == stage and err["exit_code"] == code
    assert not (out / "manifest.json").exists()


def test_weak_first_stage_stage(tmp_path):
    path = tmp_path / "weak.csv"
    d = dgp_sample(DgpSpec("Additive", 2000, 1))
    a = (abs(d.x) < 0.5).astype(float)  # take-up does not change at the cutoff
    write_csv(Dataset(d.x, d.y, 0.0, Design.FUZZY_RDD, a=a), path)
    out = tmp_path / "w"
    assert main(["fuzzy-rdd", "--input", str(path), "--out", str(out), "--order", "1", *FAST]) == 1
    assert _read_json(out / "error.json")["stage"] == "first-stage"


def test_simulate_command(tmp_path):
    out = tmp_path / "s"
    code = main(["simulate", "--dgp", "Additive", "--n", "400", "--gamma", "0.1", "--reps", "2",
                 "--boot", "60", "--mc-draws", "2000", "--methods", "conservative", "cantelli",
                 "--out", str(out)])
    assert code == 0
    manifest = _read_json(out / "manifest.json")
    jsonschema.validate(manifest, load_schema("manifest"))
    assert manifest["artifacts"] == ["mc_report.csv"]
    assert manifest["cells"][0]["target_psi2"] == pytest.approx(0.25 * 0.8)
    with open(out / "mc_report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == ["conservative", "cantelli"]


def test_console_entry_point(csvs, tmp_path):
    res = subprocess.run([sys.executable, "-m", "distdisc.cli", "rdd", "--input", str(csvs["rdd"]),
                          "--out", str(tmp_path / "m"), *FAST], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    s = _read_json(tmp_path / "m" / "summary.json")
    assert not any(isinstance(v, float) and math.isnan(v) for v in s["estimates"].values())

import numpy as np
import pytest

from distdisc.core_data import Dataset, Design, load_csv, validate, write_csv
from distdisc.exceptions import EmptySide, MissingColumn, ParseError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_design_flags():
    assert Design("SharpKink").is_kink
    assert Design.FUZZY_KINK.is_kink
    assert not Design.FUZZY_RDD.is_kink


def test_dataset_sides_and_treatment():
    d = Dataset([-0.5, 0.0, 0.5, -0.2], [1.0, 2.0, 3.0, 4.0], 0.0, Design.SHARP_RDD)
    assert d.n == 4 == len(d)
    # the cutoff itself belongs to the right side
    assert d.right.tolist() == [False, True, True, False]
    assert d.treatment.tolist() == [0.0, 1.0, 1.0, 0.0]
    assert d[1].x == 0.0 and d[1].y == 2.0


def test_dataset_is_immutable():
    d = Dataset([-0.5, -0.4, 0.4, 0.5], [1.0, 2.0, 3.0, 4.0], 0.0, Design.SHARP_RDD)
    with pytest.raises(ValueError):
        d.x[0] = 3.0


def test_dataset_needs_both_sides():
    with pytest.raises(EmptySide):
        Dataset([0.1, 0.2], [1.0, 2.0], 0.0, Design.SHARP_RDD)


def test_dataset_rejects_length_mismatch():
    with pytest.raises(ValueError):
        Dataset([-0.1, 0.2], [1.0], 0.0, Design.SHARP_RDD)


def test_load_csv_reorders_columns_and_drops_missing(tmp_path):
    path = _write(tmp_path / "d.csv", "score,outcome\n-1,2.5\n0.5,NA\n1,3\n-0.25,\n-0.5,1\n0.75,2\n")
    d = load_csv(path, {"x": "score", "y": "outcome"})
    assert d.x.tolist() == [-1.0, 1.0, -0.5, 0.75]
    assert d.y.tolist() == [2.5, 3.0, 1.0, 2.0]
    assert d.dropped_rows == (1, 3)  # 0-based data rows
    assert any("dropped 2" in w for w in validate(d).warnings)


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path / "d.csv", "x,z\n-1,2\n1,3\n")
    with pytest.raises(MissingColumn) as info:
        load_csv(path, {"x": "x", "y": "y"})
    assert info.value.stage == "ingestion"


def test_load_csv_parse_error_reports_location(tmp_path):
    path = _write(tmp_path / "d.csv", "x,y\n-1,2\n1,abc\n")
    with pytest.raises(ParseError, match="abc"):
        load_csv(path, {"x": "x", "y": "y"})


def test_csv_round_trip_is_exact(tmp_path, rng):
    x = rng.uniform(-1, 1, 50)
    y = rng.standard_normal(50) * 1e-7 + 1e5
    d = Dataset(x, y, 0.0, Design.FUZZY_RDD, a=(rng.uniform(size=50) < 0.5).astype(float))
    write_csv(d, tmp_path / "out.csv")
    back = load_csv(tmp_path / "out.csv", {"x": "x", "y": "y", "a": "a"}, Design.FUZZY_RDD)
    assert np.array_equal(back.x, d.x)
    assert np.array_equal(back.y, d.y)
    assert np.array_equal(back.a, d.a)


def test_validate_flags_sharp_violation():
    d = Dataset([-0.5, -0.1, 0.3, 0.5], [0, 1, 2, 3], 0.0, Design.SHARP_RDD, a=[0, 1, 1, 1])
    rep = validate(d)
    assert (rep.n_left, rep.n_right) == (2, 2)
    assert rep.warnings == ("sharp rule violated at row 1",)


def test_validate_flags_weak_first_stage():
    a = [0, 1, 0, 1, 0, 1, 0, 1]
    d = Dataset([-0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4], range(8), 0.0, Design.FUZZY_RDD, a=a)
    assert any("weak first stage" in w for w in validate(d).warnings)

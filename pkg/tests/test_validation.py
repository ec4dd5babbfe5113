import numpy as np
import pytest

from distdisc._validation import (
    check_fraction,
    check_optional_column,
    check_outcome,
    check_quantile_levels,
    check_running_variable,
)
from distdisc.exceptions import DistDiscError, EmptySide, MissingColumn


def test_running_variable_shapes():
    assert check_running_variable([[1.0], [2.0]]).shape == (2,)
    assert check_running_variable([1.0, 2.0]).shape == (2,)
    with pytest.raises(ValueError):
        check_running_variable([[1.0, 2.0]])
    with pytest.raises(ValueError):
        check_running_variable([1.0, np.inf])


def test_outcome_length_and_binary_column():
    x = np.zeros(3)
    with pytest.raises(ValueError):
        check_outcome([1.0, 2.0], x)
    assert check_optional_column(None, x, "a") is None
    with pytest.raises(ValueError):
        check_optional_column([0, 1, 2], x, "a", binary=True)


def test_fraction_and_levels():
    assert check_fraction(0.0, "trim", 0.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        check_fraction(0.5, "trim", 0.0, 0.5)
    with pytest.raises(ValueError):
        check_fraction(0.0, "alpha", 0.0, 1.0, closed_low=False)
    assert check_quantile_levels(0.5).shape == (1,)
    with pytest.raises(ValueError):
        check_quantile_levels([0.0, 0.5])


def test_errors_carry_stage():
    assert MissingColumn("y").stage == "ingestion"
    assert issubclass(EmptySide, DistDiscError)

import numpy as np
import pytest

from renal import InvalidInputError, ObservationSequence


def test_basic_shapes():
    s = ObservationSequence([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert s.n == 3 and s.d == 1
    assert s.values.shape == (3, 1)


def test_steps_repeat_first_gap():
    s = ObservationSequence([0.5, 1.0, 3.0], np.zeros(3), "event")
    np.testing.assert_array_equal(s.steps(), [0.5, 0.5, 2.0])


@pytest.mark.parametrize("t", [[0.0, 0.0, 1.0], [0.0, 2.0, 1.0]])
def test_non_increasing_rejected(t):
    with pytest.raises(InvalidInputError, match="index"):
        ObservationSequence(t, np.zeros(3), "event")


def test_too_short():
    with pytest.raises(InvalidInputError):
        ObservationSequence([0.0], [1.0])


def test_regular_spacing_enforced():
    with pytest.raises(InvalidInputError, match="equally spaced"):
        ObservationSequence([0.0, 1.0, 2.5], np.zeros(3))
    # the same times are fine for event data
    ObservationSequence([0.0, 1.0, 2.5], np.zeros(3), "event")


def test_regular_spacing_tolerates_rounding():
    t = np.arange(10_000) * 0.1
    ObservationSequence(t, np.zeros_like(t))


def test_non_finite_and_shape_errors():
    with pytest.raises(InvalidInputError):
        ObservationSequence([0.0, 1.0], [np.nan, 1.0])
    with pytest.raises(InvalidInputError):
        ObservationSequence([0.0, 1.0, 2.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        ObservationSequence([0.0, 1.0], [0.0, 1.0], kind="marked")


def test_immutable_and_window():
    s = ObservationSequence(np.arange(5.0), np.arange(10.0).reshape(5, 2))
    with pytest.raises(ValueError):
        s.values[0, 0] = 1.0
    w = s.window(1, 3)
    np.testing.assert_array_equal(w.timestamps, [1.0, 2.0, 3.0])
    assert w.same_as(ObservationSequence([1.0, 2.0, 3.0], s.values[1:4]))
    assert not w.same_as(s)

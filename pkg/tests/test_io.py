import numpy as np
import pytest

from renal import DataFormatError, ObservationSequence
from renal import generators as gen
from renal.io import load_csv, save_csv


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_bytes(text.encode("utf-8"))
    return p


def test_two_row_round_trip(tmp_path):
    seq = ObservationSequence([0.1, 0.30000000000000004], [[1 / 3], [2.0e-300]], "event")
    p = tmp_path / "two.csv"
    save_csv(seq, p)
    back = load_csv(p, "event")
    assert back.n == 2
    assert back.timestamps.tobytes() == seq.timestamps.tobytes()
    assert back.values.tobytes() == seq.values.tobytes()


def test_format_is_lf_and_headed(tmp_path):
    seq = gen.PROCESSES["stpp_std"](next(s for s in range(100) if _n(s) >= 2))
    p = tmp_path / "s.csv"
    save_csv(seq, p)
    raw = p.read_bytes()
    assert b"\r" not in raw
    assert raw.splitlines()[0] == b"t,x1,x2,x3"


def _n(seed):
    try:
        return gen.PROCESSES["stpp_std"](seed).n
    except Exception:
        return 0


def test_hawkes_round_trip(tmp_path):
    seq = gen.PROCESSES["se"](7)
    p = tmp_path / "events.csv"
    save_csv(seq, p)
    back = load_csv(p, "event")
    assert back.same_as(seq)


def test_scientific_notation(tmp_path):
    seq = load_csv(write(tmp_path, "t,x1\n0,1e-3\n1E0,-2.5E+2\n"))
    np.testing.assert_array_equal(seq.values[:, 0], [1e-3, -250.0])


def test_shuffled_rows_name_first_inversion(tmp_path):
    p = write(tmp_path, "t,x1\n0,1\n2,1\n1,1\n3,1\n")
    with pytest.raises(DataFormatError) as info:
        load_csv(p, "event")
    assert info.value.line == 4 and info.value.column == 1
    assert str(info.value).startswith("decreasing timestamp 1.0 after 2.0")
    assert "line 4" in str(info.value)


def test_duplicate_timestamp(tmp_path):
    with pytest.raises(DataFormatError, match="duplicate") as info:
        load_csv(write(tmp_path, "t,x1\n0,1\n1,1\n1,2\n"), "event")
    assert info.value.line == 4


def test_malformed_field_line_and_column(tmp_path):
    with pytest.raises(DataFormatError) as info:
        load_csv(write(tmp_path, "t,x1,x2\n0,1,2\n1,abc,3\n"))
    assert (info.value.line, info.value.column) == (3, 2)
    with pytest.raises(DataFormatError) as info:
        load_csv(write(tmp_path, "t,x1\n0,1\n1,nan\n"))
    assert (info.value.line, info.value.column) == (3, 2)


@pytest.mark.parametrize("text", ["", "time,x1\n0,1\n1,2\n", "t,x2\n0,1\n1,2\n", "t\n0\n1\n"])
def test_bad_header(tmp_path, text):
    with pytest.raises(DataFormatError) as info:
        load_csv(write(tmp_path, text))
    assert info.value.line == 1


def test_field_count_and_too_few_rows(tmp_path):
    with pytest.raises(DataFormatError, match="fields") as info:
        load_csv(write(tmp_path, "t,x1\n0,1\n1,2,3\n"))
    assert info.value.line == 3
    with pytest.raises(DataFormatError, match="at least 2"):
        load_csv(write(tmp_path, "t,x1\n0,1\n"))


def test_uneven_regular_spacing_is_a_data_error(tmp_path):
    p = write(tmp_path, "t,x1\n0,1\n1,1\n3,1\n")
    with pytest.raises(DataFormatError, match="equally spaced"):
        load_csv(p, "regular")
    assert load_csv(p, "event").n == 3


def test_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="cannot read"):
        load_csv(tmp_path / "nope.csv")

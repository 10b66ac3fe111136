import numpy as np
import pytest

from blockgel.data import Dataset, read_csv
from blockgel.errors import DataError


def test_header_detected(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("y,z\n1,2\n3,4\n")
    d = read_csv(p)
    assert (d.n, d.d) == (2, 2)
    np.testing.assert_array_equal(d.values, [[1, 2], [3, 4]])


def test_headerless(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1.5\n2.5\n-3e-1\n")
    assert read_csv(p).values[:, 0].tolist() == [1.5, 2.5, -0.3]


def test_non_numeric_cell_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("y,z\n1,2\n3,abc\n")
    with pytest.raises(DataError, match=r"bad.csv:3"):
        read_csv(p)


def test_ragged_rows(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(DataError, match="column"):
        read_csv(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        read_csv(tmp_path / "nope.csv")


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.array([1.0]))
    with pytest.raises(DataError):
        Dataset(np.array([1.0, np.nan]))
    d = Dataset(np.arange(4.0))
    assert d.values.shape == (4, 1)
    with pytest.raises(ValueError):
        d.values[0, 0] = 9.0

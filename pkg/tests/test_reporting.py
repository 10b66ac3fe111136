import json
import math
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockgel.reporting import atomic_write, dumps


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip(x):
    assert json.loads(dumps({"x": x}))["x"] == x


def test_non_finite_become_null():
    out = json.loads(dumps([math.nan, math.inf, 1.5]))
    assert out == [None, None, 1.5]


def test_numpy_values():
    out = json.loads(dumps({"a": np.arange(3), "b": np.float64(0.1), "c": np.bool_(True), "d": (1, 2)}))
    assert out == {"a": [0, 1, 2], "b": 0.1, "c": True, "d": [1, 2]}


def test_seventeen_digits():
    assert "0.10000000000000001" in dumps([0.1])


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "out.csv"
    atomic_write(p, "a\n")
    atomic_write(p, "b\n")
    assert p.read_text() == "b\n"
    assert os.listdir(tmp_path) == ["out.csv"]


def test_interrupted_write_keeps_old_file(tmp_path, monkeypatch):
    p = tmp_path / "table.csv"
    p.write_text("old\n")

    def boom(src, dst):
        raise KeyboardInterrupt

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(KeyboardInterrupt):
        atomic_write(p, "new\n")
    assert p.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["table.csv"]

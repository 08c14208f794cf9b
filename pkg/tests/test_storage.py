from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from core.errors import InputError
from infra.storage.local import MANIFEST_NAME, LocalStorage, format_matrix, read_json, read_matrix_csv


def test_format_matrix_is_headerless_full_precision():
    text = format_matrix(np.array([[0.1, 2.0], [1.0 / 3.0, -4.5]]))
    assert text == "0.10000000000000001,2\n0.33333333333333331,-4.5\n"


def test_matrix_written_then_read_is_exact(tmp_path):
    m = np.random.default_rng(0).standard_normal((7, 3))
    store = LocalStorage(tmp_path / "out")
    path = store.write_matrix_csv("data.csv", m)
    assert path.parent == tmp_path / "out"
    assert np.array_equal(read_matrix_csv(path), m)


@pytest.mark.parametrize(
    "content",
    [
        "1,2,3\n4,5\n",
        "1,2\nx,4\n",
        "",
        "1,nan\n",
        "1,2\n3,4,5\n",
        "1,inf\n",
    ],
)
def test_read_matrix_csv_rejects_bad_input(tmp_path, content):
    target = tmp_path / "bad.csv"
    target.write_text(content)
    with pytest.raises(InputError):
        read_matrix_csv(target)


@pytest.mark.parametrize(
    "content",
    [
        "\ufeff1.0,2.0\n3.0,4.0\n",
        "\"1.0\",\"2.0\"\n\"3.0\",\"4.0\"\n",
        "1,2\n\n3,4\n\n",
        "1,2\r\n3,4\r\n",
    ],
)
def test_read_matrix_csv_accepts_common_exports(tmp_path, content):
    target = tmp_path / "export.csv"
    target.write_text(content, encoding="utf-8")
    assert np.array_equal(read_matrix_csv(target), [[1.0, 2.0], [3.0, 4.0]])


def test_short_row_is_reported_by_position(tmp_path):
    target = tmp_path / "short.csv"
    target.write_text("1,2,3\n4,5\n")
    with pytest.raises(InputError, match="row 2, column 3"):
        read_matrix_csv(target)


def test_read_missing_files(tmp_path):
    with pytest.raises(InputError):
        read_matrix_csv(tmp_path / "missing.csv")
    with pytest.raises(InputError):
        read_json(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(InputError):
        read_json(tmp_path / "broken.json")


def test_write_json_sorts_keys_and_handles_numpy(tmp_path):
    store = LocalStorage(tmp_path)
    path = store.write_json("x.json", {"b": np.float64(1.5), "a": np.arange(2)})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1], "b": 1.5}


def test_write_frame(tmp_path):
    store = LocalStorage(tmp_path)
    path = store.write_frame("f.csv", pd.DataFrame({"x": [0.1], "y": ["z"]}))
    assert path.read_text() == "x,y\n0.10000000000000001,z\n"


def test_default_root_comes_from_settings(tmp_path, monkeypatch):
    from config import settings as settings_module

    monkeypatch.setattr(settings_module.settings, "OUTPUT_DIR", str(tmp_path / "runs"))
    store = LocalStorage()
    assert store.root == tmp_path / "runs"
    assert store.root.is_dir()
    assert MANIFEST_NAME == "manifest.json"

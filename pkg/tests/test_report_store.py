import csv
import io
import json
import math
from pathlib import Path
import sys

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from report_store import ReportStore, csv_bytes, dumps, render_table, to_jsonable


def test_to_jsonable_converts_numpy_and_sets():
    value = {
        1: np.arange(3),
        "flag": np.bool_(True),
        "count": np.int64(4),
        "ratio": np.float64(0.5),
        "members": frozenset({3, 1}),
        "pair": (1, 2),
    }

    assert to_jsonable(value) == {
        "1": [0, 1, 2],
        "flag": True,
        "count": 4,
        "ratio": 0.5,
        "members": [1, 3],
        "pair": [1, 2],
    }


def test_non_finite_floats_become_strings():
    assert to_jsonable([math.inf, -math.inf]) == ["inf", "-inf"]
    assert to_jsonable(float("nan")) == "nan"


def test_dumps_is_sorted_and_newline_terminated():
    text = dumps({"b": 1, "a": [np.int32(2)]})

    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [2], "b": 1}


def test_report_store_writes_atomically(tmp_path):
    store = ReportStore(tmp_path / "reports")

    path = store.write_json("dim/2x2.json", {"verdict": "defective"})

    assert path == tmp_path / "reports" / "dim" / "2x2.json"
    assert store.read_json("dim/2x2.json") == {"verdict": "defective"}
    assert [entry.name for entry in path.parent.iterdir()] == ["2x2.json"]


def test_write_bytes_replaces_existing_file(tmp_path):
    store = ReportStore(tmp_path)

    store.write_bytes("table.csv", b"old\n")
    store.write_bytes("table.csv", b"new\n")

    assert (tmp_path / "table.csv").read_bytes() == b"new\n"


def test_render_table_escapes_cells():
    table = render_table(["state", "note"], [["01", "a|b"], ["10", "two\nlines"]])

    assert table.splitlines() == [
        "| state | note |",
        "| --- | --- |",
        "| 01 | a\\|b |",
        "| 10 | two lines |",
    ]


def test_csv_bytes_round_trips_through_reader():
    payload = csv_bytes(["visible", "rank"], [["3,3", np.int64(7)], ["2,2,2", 8]])
    rows = list(csv.reader(io.StringIO(payload.decode("utf-8"))))

    assert rows == [["visible", "rank"], ["3,3", "7"], ["2,2,2", "8"]]

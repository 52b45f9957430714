import json
import math
import unittest

import numpy as np
import pytest

from sclt.batches import SampleBatch
from sclt.distances import DistanceReport
from sclt.errors import ConfigError
from sclt.output import (
    REPORT_HEADER,
    SCHEMA_VERSION,
    emit,
    emit_batches,
    load,
    load_config,
    plain,
    render_csv,
    report_row,
)

REPORT = DistanceReport(
    ("Q_T", "R_T"), "coupling_l1", 0.25, uncertainty=0.01, params={"L": 1.0}, T=1e4, seed=3, N=2,
    theory_shape=0.5, flags=("excluded=1", "unnormalized"),
)


class TestCsv(unittest.TestCase):

    def test_header_only(self):
        self.assertEqual(render_csv([], ("a", "b")), "a,b\n")

    def test_report_row(self):
        row = report_row(REPORT)
        self.assertEqual(row["flags"], "excluded=1|unnormalized")
        self.assertTrue(math.isnan(row["M"]))
        self.assertEqual(set(row), set(REPORT_HEADER))

    def test_byte_stable(self):
        first = render_csv([report_row(REPORT)], REPORT_HEADER)
        second = render_csv([report_row(REPORT)], REPORT_HEADER)
        self.assertEqual(first, second)
        self.assertIn("0.25,0.01", first)


def test_emit_csv(tmp_path):
    path = tmp_path / "distances.csv"
    emit([REPORT], "csv", path)

    rows = load(path)
    assert rows[0]["stage_a"] == "Q_T"
    assert float(rows[0]["value"]) == 0.25
    assert rows[0]["M"] == "nan"


def test_emit_json(tmp_path):
    path = tmp_path / "rates.json"
    emit([{"T": 1e4, "value": 0.1}], "json", path, header=("T", "value"), kind="rates", meta={"seed": 1})

    document = load(path)
    assert list(document)[0] == "schema_version"
    assert document["schema_version"] == SCHEMA_VERSION
    assert document["kind"] == "rates"
    assert document["rows"] == [{"T": 1e4, "value": 0.1}]
    assert document["meta"] == {"seed": 1}


def test_json_missing_values_are_null(tmp_path):
    path = tmp_path / "distances.json"
    emit([REPORT], "json", path, meta={"tail": math.inf})

    def reject(name):
        raise ValueError(f"non-standard constant {name}")

    text = path.read_text(encoding="utf-8")
    document = json.loads(text, parse_constant=reject)
    row = document["rows"][0]
    assert row["M"] is None and row["R"] is None and row["F"] is None
    assert row["L"] == 1.0
    assert document["meta"]["tail"] is None
    assert "NaN" not in text


def test_emit_unknown_format(tmp_path):
    with pytest.raises(ConfigError):
        emit([], "xml", tmp_path / "out.xml")  # type: ignore[arg-type]


def test_emit_to_stdout(capsys):
    emit([], "csv", None, header=("a",))
    assert capsys.readouterr().out == "a\n"


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError) as error:
        emit([], "csv", tmp_path / "missing" / "out.csv")
    assert "missing" in str(error.value)


def test_emit_batches(tmp_path):
    batch = SampleBatch("R_T", np.array([[0.5, -1.0], [2.0, 0.0]]), seed=4, meta={"heights_digest": "abc"},
                        flags=np.array([False, True]))

    csv_path = tmp_path / "samples.csv"
    emit_batches({"R_T": batch}, "csv", csv_path)
    rows = load(csv_path)
    assert [row["excluded"] for row in rows] == ["false", "true"]
    assert float(rows[0]["x1"]) == -1.0

    json_path = tmp_path / "samples.json"
    emit_batches({"R_T": batch}, "json", json_path)
    document = load(json_path)
    assert document["stages"]["R_T"]["data"] == [[0.5, -1.0], [2.0, 0.0]]
    assert document["stages"]["R_T"]["meta"]["heights_digest"] == "abc"


def test_plain():
    assert plain({"a": np.arange(2), "b": (np.float64(0.5), 1j), "c": np.bool_(True)}) == {
        "a": [0, 1], "b": [0.5, [0.0, 1.0]], "c": True,
    }


class TestLoadConfig(unittest.TestCase):

    def write(self, directory, text):
        path = directory / "config.json"
        path.write_text(text, encoding="utf-8")
        return path

    @pytest.fixture(autouse=True)
    def directory(self, tmp_path):
        self.tmp_path = tmp_path

    def test_valid(self):
        path = self.write(self.tmp_path, json.dumps({"schema_version": 1, "height": 1e4}))
        self.assertEqual(load_config(path)["height"], 1e4)

    def test_malformed(self):
        with self.assertRaises(ConfigError):
            load_config(self.write(self.tmp_path, "{"))

    def test_not_an_object(self):
        with self.assertRaises(ConfigError):
            load_config(self.write(self.tmp_path, "[1]"))

    def test_schema_version(self):
        with self.assertRaises(ConfigError):
            load_config(self.write(self.tmp_path, json.dumps({"height": 1e4})))
        with self.assertRaises(ConfigError):
            load_config(self.write(self.tmp_path, json.dumps({"schema_version": 2})))

    def test_missing_file(self):
        with self.assertRaises(OSError):
            load_config(self.tmp_path / "absent.json")

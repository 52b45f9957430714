import json

import pytest

from sclt.cli import COMMANDS, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PRECONDITION, build_parser, main
from sclt.output import load

CHAIN = {
    "schema_version": 1,
    "height": 1e4,
    "characters": [[5, 1], [5, 2]],
    "approx": {"Y_override": 1000, "X_override": 5000},
    "samples": 32,
    "stages": ["R_T", "R1_T", "Z_tilde"],
    "distance": {"dict_size": 8, "grid": 3},
}


@pytest.fixture
def write_config(tmp_path):
    def write(config):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return str(path)

    return write


def test_parser_requires_config():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sample"])


def test_sample_csv(tmp_path, write_config):
    out = tmp_path / "samples.csv"
    assert main(["sample", "--config", write_config(CHAIN), "--out", str(out)]) == EXIT_OK

    rows = load(out)
    assert {row["stage"] for row in rows} == {"R_T", "R1_T", "Z_tilde"}
    assert len(rows) == 3 * 32


def test_seed_override_is_reproducible(tmp_path, write_config):
    config = write_config(CHAIN)
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    main(["sample", "--config", config, "--seed", "5", "--format", "json", "--out", str(first)])
    main(["sample", "--config", config, "--seed", "5", "--threads", "2", "--format", "json", "--out", str(second)])

    assert first.read_bytes() == second.read_bytes()
    assert load(first)["stages"]["R_T"]["seed"] == 5


def test_distances(tmp_path, write_config):
    out = tmp_path / "distances.json"
    assert main(["distances", "--config", write_config(CHAIN), "--format", "json", "--out", str(out)]) == EXIT_OK

    document = load(out)
    assert document["kind"] == "distances"
    assert {row["estimator"] for row in document["rows"]} >= {"coupling_l1", "cf_grid", "abb_certificate"}


def test_covariance(tmp_path, write_config):
    out = tmp_path / "covariance.json"
    assert main(["covariance", "--config", write_config(CHAIN), "--out", str(out)]) == EXIT_OK
    assert load(out)["K_target"] == [[1.0, 0.0], [0.0, 1.0]]


def test_moments(tmp_path, write_config):
    config = {
        "schema_version": 1, "height": 200.0, "characters": [[4, 1]],
        "approx": {"Y_override": 30, "X_override": 100}, "moments": {"k": 1, "nodes": 2001},
    }
    out = tmp_path / "moments.csv"
    assert main(["moments", "--config", write_config(config), "--out", str(out)]) == EXIT_OK
    assert load(out)[0]["consistent"] == "true"


def test_rates_report_failures_per_height(tmp_path, write_config):
    out = tmp_path / "rates.csv"
    config = dict(CHAIN, heights=[1e4, 10.0])
    assert main(["rates", "--config", write_config(config), "--out", str(out)]) == EXIT_OK

    statuses = {row["T"]: row["status"] for row in load(out)}
    assert statuses["10"].startswith("DomainError")


def test_config_errors(write_config):
    assert main(["sample", "--config", write_config({"schema_version": 2})]) == EXIT_CONFIG
    assert main(["sample", "--config", write_config(dict(CHAIN, colour="red"))]) == EXIT_CONFIG
    assert main(["sample", "--config", write_config(dict(CHAIN, height=1e4, approx={}))]) == EXIT_CONFIG
    assert main(["dedekind", "--config", write_config(CHAIN)]) == EXIT_CONFIG


def test_precondition_errors(write_config):
    not_pd = dict(CHAIN, characters=[[5, 1], [5, 1]])
    assert main(["sample", "--config", write_config(not_pd)]) == EXIT_PRECONDITION

    too_high = dict(CHAIN, height=1e8, stages=["X_T"])
    assert main(["sample", "--config", write_config(too_high)]) == EXIT_PRECONDITION


def test_io_errors(tmp_path, write_config):
    assert main(["sample", "--config", str(tmp_path / "absent.json")]) == EXIT_IO
    assert main(["sample", "--config", write_config(CHAIN), "--out", str(tmp_path / "no" / "out.csv")]) == EXIT_IO


def test_distances_need_two_stages(write_config):
    single = dict(CHAIN, stages=["R_T"])
    assert main(["distances", "--config", write_config(single)]) == EXIT_CONFIG


def test_value_errors_map_to_config_exit(monkeypatch, write_config):
    def refuse(experiment, out):
        raise ValueError("Batches are not co-sampled: seeds 1 and 2")

    monkeypatch.setitem(COMMANDS, "distances", refuse)
    assert main(["distances", "--config", write_config(CHAIN)]) == EXIT_CONFIG

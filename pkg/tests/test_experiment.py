import dataclasses
import json

import numpy as np
import pytest

from rhsbeam.experiment import (ExperimentConfig, TRIAL_CSV_COLUMNS,
                                SUMMARY_CSV_COLUMNS, aggregate, load_codebooks,
                                make_config, parse_config_file, placement_rng,
                                run_experiment, run_trial, sample_users,
                                save_codebooks, snr_db_to_noise_variance,
                                write_csv, write_records_jsonl)
from rhsbeam.model import ArrayModel, ConfigError


# ------------------------------------------------------------ configuration

def test_profiles():
    desk = make_config("desk")
    assert desk.system.n_elements == 64
    assert desk.n_psi == 32 and desk.n_mu == 5 and desk.n_layers == 5
    paper = make_config("paper")
    assert paper.system.n_elements == 256
    assert paper.n_psi == 64 and paper.n_mu == 10 and paper.n_layers == 6
    assert paper.system.element_spacing == pytest.approx(paper.system.wavelength / 4)


def test_config_file_parsing(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# comment line\n"
        "n_elements = 16\n"
        "n_feeds = 4\n"
        "n_angle_samples = 8   # inline comment\n"
        "n_distance_samples = 2\n"
        "n_layers = 3\n"
        "n_users = 2\n"
        "snr_db = 0,10\n"
        "schemes = proposed,exhaustive\n"
        "trials = 7\n"
        "seed = 99\n")
    cfg = make_config("desk", file_kv=parse_config_file(path))
    assert cfg.system.n_elements == 16
    assert cfg.n_psi == 8 and cfg.n_layers == 3
    assert cfg.snr_db == (0.0, 10.0)
    assert cfg.schemes == ("proposed", "exhaustive")
    assert cfg.trials == 7 and cfg.seed == 99


def test_config_file_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("this is not a key value line\n")
    with pytest.raises(ConfigError):
        parse_config_file(bad)
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("mystery_knob = 3\n")
    with pytest.raises(ConfigError):
        make_config("desk", file_kv=parse_config_file(unknown))


def test_config_validation():
    with pytest.raises(ConfigError):
        make_config("desk", overrides={"n_psi": 24})  # not 2^S
    with pytest.raises(ConfigError):
        make_config("desk", overrides={"trials": 0})
    with pytest.raises(ConfigError):
        make_config("desk", overrides={"scenario": "orbital"})
    with pytest.raises(ConfigError):
        make_config("desk", overrides={"schemes": ("proposed", "psychic")})
    with pytest.raises(ConfigError):
        make_config("desk", overrides={"k_users": 11})  # exceeds n_feeds
    with pytest.raises(ConfigError):
        make_config("nope")
    with pytest.raises(ConfigError):
        # r range outside what the mu bounds can represent
        make_config("desk", overrides={"r_min": 0.5, "r_max": 10.0})


def test_snr_convention():
    assert snr_db_to_noise_variance(0.0) == pytest.approx(1.0)
    assert snr_db_to_noise_variance(20.0) == pytest.approx(0.01)


# ------------------------------------------------------------- user sampling

def test_sample_users_scenario_ranges():
    for scenario, (lo, hi) in (("near", (3.0, 20.0)), ("far", (80.0, 150.0)),
                               ("hybrid", (3.0, 150.0))):
        rng = np.random.default_rng(0)
        users = sample_users(scenario, 40, rng)
        for u in users:
            # invert mu = (1 - psi^2) / r to recover the sampled range
            r = (1 - u.position.psi ** 2) / u.position.mu
            assert lo - 1e-9 <= r <= hi + 1e-9
            assert -0.5 - 1e-12 <= u.position.psi <= 0.5 + 1e-12
            assert u.path_gain == 1.0 + 0.0j


def test_sample_users_deterministic():
    a = sample_users("near", 5, np.random.default_rng(7))
    b = sample_users("near", 5, np.random.default_rng(7))
    assert all(x.position == y.position for x, y in zip(a, b))
    c = sample_users("near", 5, np.random.default_rng(8))
    assert any(x.position != y.position for x, y in zip(a, c))


def test_sample_users_rejects_empty_range():
    with pytest.raises(ValueError):
        sample_users((5.0, 4.0), 2, np.random.default_rng(0))


# ---------------------------------------------------------------- run_trial

def test_run_trial_record_shape(tiny_config, tiny_array, tiny_books):
    record, rows = run_trial(tiny_config, tiny_array, tiny_books, trial=0)
    assert record["trial"] == 0
    assert len(record["users"]) == tiny_config.k_users
    n_combo = len(tiny_config.snr_db) * len(tiny_config.schemes)
    assert len(record["results"]) == n_combo
    assert len(rows) == n_combo
    for row in rows:
        assert set(TRIAL_CSV_COLUMNS) <= set(row)
        assert row["config_hash"] == tiny_config.config_hash_hex()
    for res in record["results"]:
        assert len(res["errors"]) == tiny_config.k_users
        assert res["transcript"]["scheme"] == res["scheme"]


def test_run_trial_deterministic(tiny_config, tiny_array, tiny_books):
    a = run_trial(tiny_config, tiny_array, tiny_books, trial=2)
    b = run_trial(tiny_config, tiny_array, tiny_books, trial=2)
    assert json.dumps(a[0], sort_keys=True) == json.dumps(b[0], sort_keys=True)
    assert a[1] == b[1]


def test_schemes_share_placements(tiny_config, tiny_array, tiny_books):
    record, _ = run_trial(tiny_config, tiny_array, tiny_books, trial=1)
    # one users list for the trial, all schemes keyed to it
    assert len(record["users"]) == tiny_config.k_users
    schemes = {res["scheme"] for res in record["results"]}
    assert schemes == set(tiny_config.schemes)


# ------------------------------------------------------------ run_experiment

def test_run_experiment_worker_independence(tiny_config, tiny_books):
    cfg = dataclasses.replace(tiny_config, trials=4)
    rec1, rows1 = run_experiment(cfg, books=tiny_books, workers=1)
    rec2, rows2 = run_experiment(cfg, books=tiny_books, workers=2)
    assert rows1 == rows2
    assert json.dumps(rec1, sort_keys=True) == json.dumps(rec2, sort_keys=True)
    assert [r["trial"] for r in rec1] == [0, 1, 2, 3]


# ----------------------------------------------------------------- aggregate

def test_aggregate_single_record_is_identity():
    row = {"schema_version": 1, "config_hash": "ff", "scheme": "proposed",
           "snr_db": 10.0, "k_users": 2, "mean_error": 0.5, "sum_rate": 3.0,
           "throughput": 2.9}
    out = aggregate([row])
    assert len(out) == 1
    assert out[0]["error_mean"] == 0.5
    assert out[0]["error_std"] == 0.0
    assert out[0]["n_trials"] == 1


def test_aggregate_identical_records_zero_std():
    row = {"schema_version": 1, "config_hash": "ff", "scheme": "proposed",
           "snr_db": 10.0, "k_users": 2, "mean_error": 0.5, "sum_rate": 3.0,
           "throughput": 2.9}
    out = aggregate([row, dict(row)])
    assert out[0]["n_trials"] == 2
    assert out[0]["error_std"] == 0.0
    assert out[0]["rate_std"] == 0.0


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_groups_sorted():
    rows = []
    for scheme in ("proposed", "exhaustive"):
        for snr in (20.0, 0.0):
            rows.append({"schema_version": 1, "config_hash": "ff",
                         "scheme": scheme, "snr_db": snr, "k_users": 2,
                         "mean_error": 0.1, "sum_rate": 1.0, "throughput": 1.0})
    out = aggregate(rows)
    keys = [(r["scheme"], r["snr_db"]) for r in out]
    assert keys == sorted(keys)


# -------------------------------------------------------------------- files

def test_codebook_save_load_roundtrip(tiny_config, tiny_books, tmp_path):
    save_codebooks(tiny_books, tmp_path, tiny_config)
    loaded = load_codebooks(tmp_path, tiny_config)
    assert loaded.angular == tiny_books.angular
    assert loaded.single_beam == tiny_books.single_beam
    assert loaded.far_field == tiny_books.far_field
    assert loaded.far_beams == tiny_books.far_beams


def test_load_codebooks_missing_file_message(tiny_config, tmp_path):
    with pytest.raises(ConfigError, match="gen-codebook"):
        load_codebooks(tmp_path, tiny_config)


def test_csv_and_jsonl_bytes_deterministic(tiny_config, tiny_books, tmp_path):
    records, rows = run_experiment(tiny_config, books=tiny_books)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(rows, TRIAL_CSV_COLUMNS, p1)
    write_csv(rows, TRIAL_CSV_COLUMNS, p2)
    assert p1.read_bytes() == p2.read_bytes()
    j1, j2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_records_jsonl(records, j1)
    write_records_jsonl(records, j2)
    assert j1.read_bytes() == j2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == ",".join(TRIAL_CSV_COLUMNS)
    summary = aggregate(rows)
    write_csv(summary, SUMMARY_CSV_COLUMNS, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(SUMMARY_CSV_COLUMNS)

import math

import numpy as np
import pytest
import yaml

import svartest.experiment as ex
from svartest.experiment import (
    CSV_COLUMNS,
    CellAbortedWarning,
    ConfigError,
    ExperimentConfig,
    RateRow,
    RateTable,
    emit_csv,
    estimation_errors,
    mc_stderr,
    read_csv,
    run_experiment,
)
from svartest.graphs import gen_block_A
from svartest.model import TestSpec, VarModel, population_cov
from svartest.score import noncentrality

SMALL = dict(graph="block", M_list=[10], T_list=[200], reps=4, tuning="fixed",
             statistics=["U_tilde", "R_hat"], master_seed=3,
             noise={"kind": "gaussian", "scale": 1.0})


def _cfg(**kw):
    return ExperimentConfig.from_dict({**SMALL, **kw})


def test_config_lists_every_problem():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"graph": "star", "reps": 0, "alpha": 2.0, "bogus": 1,
                                    "spec": [[1, 40]], "M_list": [10]})
    text = "\n".join(err.value.problems)
    for key in ("bogus", "graph", "reps", "alpha", "spec"):
        assert key in text
    assert len(err.value.problems) >= 5


def test_config_hypothesis_checks():
    with pytest.raises(ConfigError, match="phi"):
        _cfg(hypothesis={"phi": [-1.0]})
    with pytest.raises(ConfigError, match="delta_norm"):
        _cfg(hypothesis={"phi": [0.5], "delta_norm": 0})
    cfg = _cfg(hypothesis={"phi": 0.5})
    assert cfg.phi_list() == [0.5] and not cfg.is_null


def test_config_load_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    cfg = ExperimentConfig.load(path)
    assert cfg.M_list == [10] and cfg.is_null
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


@pytest.mark.parametrize("name", ["paper_default", "alternative", "minimal"])
def test_shipped_configs_validate(name):
    ExperimentConfig.load(f"configs/{name}.yaml")


def test_mc_stderr():
    assert mc_stderr(0.05, 500) == pytest.approx(math.sqrt(0.05 * 0.95 / 500))
    assert mc_stderr(0.0, 10) == 0.0


def test_csv_round_trip(tmp_path):
    rows = [RateRow("random", 30, 1000, 2, "null", "U_tilde", 0.056, 500, mc_stderr(0.056, 500)),
            RateRow("random", 30, 1000, 2, 0.5, "R_hat", 1 / 3, 500, mc_stderr(1 / 3, 500)),
            RateRow("random", "avg", 100, 2, 0.25, "R_hat", 0.1, 1000, 0.01)]
    path = tmp_path / "r.csv"
    emit_csv(RateTable(rows), path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 4
    back = read_csv(path)
    assert sorted(back.rows, key=RateRow.sort_key) == sorted(rows, key=RateRow.sort_key)


def test_csv_empty_and_failures(tmp_path):
    path = tmp_path / "e.csv"
    emit_csv(RateTable(), path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert read_csv(path).rows == []
    emit_csv(RateTable([RateRow("block", 10, 200, 2, "null", "U_tilde", 0.0, 3, 0.0, 1)]), path)
    assert path.read_text().splitlines()[0].endswith(",failures")
    assert read_csv(path).rows[0].failures == 1


def test_csv_row_order():
    rows = [RateRow("g", "avg", 100, 2, "null", "U_tilde", 0, 1, 0),
            RateRow("g", 30, 100, 2, 0.5, "U_tilde", 0, 1, 0),
            RateRow("g", 30, 100, 2, "null", "U_tilde", 0, 1, 0)]
    order = RateTable(rows).sorted_rows()
    assert [(r.M, r.phi) for r in order] == [(30, "null"), (30, 0.5), ("avg", "null")]


def test_run_small_null(tmp_path):
    table = run_experiment(_cfg())
    assert [r.statistic for r in table.rows] == ["R_hat", "U_tilde"]
    for r in table.rows:
        assert r.reps == 4 and r.phi == "null" and r.rho == 2 and 0 <= r.rejection_rate <= 1
        assert table.values[(10, 200, "null", r.statistic)].shape == (4,)


def test_determinism_across_workers(tmp_path):
    cfg = _cfg(reps=6, M_list=[10, 12], hypothesis={"phi": [0.5], "delta_seed": 4})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_experiment(cfg, workers=1), a)
    emit_csv(run_experiment(cfg, workers=3), b)
    assert a.read_bytes() == b.read_bytes()
    # avg rows are present when several M are run
    assert any(r.M == "avg" for r in read_csv(a).rows)


def test_single_replicate_is_reproducible(tmp_path):
    cfg = _cfg(reps=1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_experiment(cfg), a)
    emit_csv(run_experiment(cfg), b)
    assert a.read_bytes() == b.read_bytes()
    assert all(r.rejection_rate in (0.0, 1.0) for r in read_csv(a).rows)


def test_average_rows():
    table = run_experiment(_cfg(M_list=[10, 12], reps=3))
    for stat in ("U_tilde", "R_hat"):
        avg = table.lookup("avg", 200, "null", stat)
        parts = [table.lookup(M, 200, "null", stat).rejection_rate for M in (10, 12)]
        assert avg.rejection_rate == pytest.approx(np.mean(parts))
        assert avg.reps == 6


def test_alternative_direction_noncentrality():
    cfg = _cfg(hypothesis={"phi": [0.5], "delta_seed": 1, "delta_norm": 2.0})
    table = run_experiment(cfg)
    assert table.noncentrality[10] == 4.0
    A = ex.graph_for(cfg, 10)
    spec = cfg.test_spec()
    model = VarModel(A)
    delta = ex.alternative_direction(cfg, model, spec)
    assert noncentrality(model, population_cov(model), spec, delta) == pytest.approx(4.0)


def test_aborted_cell(monkeypatch, tmp_path):
    monkeypatch.setattr(ex, "_run_replicate", lambda task: "ValueError: forced")
    with pytest.warns(CellAbortedWarning):
        table = run_experiment(_cfg(reps=3))
    assert all(math.isnan(r.rejection_rate) and r.failures == 3 for r in table.rows)
    path = tmp_path / "f.csv"
    emit_csv(table, path)
    assert "failures" in path.read_text().splitlines()[0]


@pytest.mark.slow
def test_far_alternative_matches_null():
    # phi = 5 moves A by T^-5, so its rejection rate is the false positive rate
    base = dict(SMALL, reps=200, statistics=["U_tilde"])
    null = run_experiment(ExperimentConfig.from_dict(base)).rows[0]
    far = run_experiment(ExperimentConfig.from_dict(
        dict(base, hypothesis={"phi": [5.0], "delta_seed": 2}))).rows[0]
    n = null.reps + far.reps
    pooled = (null.rejection_rate * null.reps + far.rejection_rate * far.reps) / n
    se = math.sqrt(max(pooled * (1 - pooled), 1e-12) * (1 / null.reps + 1 / far.reps))
    assert abs(null.rejection_rate - far.rejection_rate) / se < 2.576


def test_estimation_errors_shape_and_decay():
    A = gen_block_A(10)
    spec = TestSpec.from_pairs([(0, 1), (2, 3)])
    a1, w1 = estimation_errors(A, spec, 200, 5, lambda_const=0.5, seed=1)
    a2, w2 = estimation_errors(A, spec, 3200, 5, lambda_const=0.5, seed=1)
    assert a1.shape == w1.shape == (5,)
    assert a2.mean() < a1.mean() and w2.mean() < w1.mean()


def test_workers_env(monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "3")
    assert ex.resolve_workers() == 3
    assert ex.resolve_workers(2) == 2
    with pytest.raises(ValueError):
        ex.resolve_workers(0)

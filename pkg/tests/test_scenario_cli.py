from __future__ import annotations

import json

import numpy as np
import pytest

from predmppi import cli
from predmppi.scenario import BUILTIN_SCENARIOS, ConfigurationError, builtin_path, from_dict, load_scenario, validate
from predmppi.simulation import run_episode

from .helpers import crossing, tiny


def builtin_dict(name: str) -> dict:
    return json.loads(builtin_path(name).read_text())


def shortened(name: str, t_max: int = 15, n_samples: int = 32) -> dict:
    d = builtin_dict(name)
    d["termination"]["t_max"] = t_max
    d["planner"]["n_samples"] = n_samples
    return d


def write(tmp_path, d, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


# scenario loading and validation


def test_builtin_swap_loads_with_four_agents():
    sc = load_scenario("swap_symmetric")
    assert len(sc.agents) == 4
    assert sc.lambdas == (0.0, 2.5, 5.0) and len(sc.seeds) == 50


@pytest.mark.parametrize("name", BUILTIN_SCENARIOS)
def test_every_builtin_validates(name):
    assert validate(builtin_dict(name)) == []


def test_negative_lambda_names_the_field():
    with pytest.raises(ConfigurationError) as exc:
        from_dict(tiny(predictability={"lambdas": [0.0, -1.0]}))
    assert any(e.startswith("predictability.lambdas[1]") for e in exc.value.errors)


def test_duplicate_ids_list_both_entries():
    agents = [{"id": "x", "start": [0, 0], "goal": [1, 0]}, {"id": "x", "start": [2, 0], "goal": [3, 0]}]
    errors = validate(tiny(agents=agents))
    assert any("agents[1]" in e and "agents[0]" in e and "'x'" in e for e in errors)


def test_all_errors_reported_together():
    d = tiny(predictability={"lambdas": [-1.0]}, dt=-0.1, unknown=3)
    assert len(validate(d)) >= 3


def test_empty_lambda_list_rejected():
    assert validate(tiny(predictability={"lambdas": []}))
    with pytest.raises(ConfigurationError):
        cli.run_batch(from_dict(tiny()), lambdas=[])


def test_unknown_keys_rejected():
    d = tiny()
    d["agents"][0]["colour"] = "red"
    assert any("colour" in e for e in validate(d))


def test_goal_conditioned_prior_must_match_goals():
    pred = {"kind": "goal_conditioned", "goals": {"A": [1, 0], "B": [0, 1]}, "prior": {"A": 1.0}}
    assert any(e.startswith("predictor.prior") for e in validate(tiny(predictor=pred)))


def test_invalid_covariance_rejected():
    assert any(e.startswith("predictor.cov") for e in validate(tiny(predictor={"kind": "constant_velocity", "cov": [[1, 2], [2, 1]]})))


# batches and CSV


def test_single_seed_csv_is_byte_identical():
    sc = from_dict(crossing(termination={"t_max": 25}))
    a = cli.results_csv(cli.run_batch(sc, [1.0], [7]))
    b = cli.results_csv(cli.run_batch(sc, [1.0], [7]))
    assert a == b
    assert a.splitlines()[0] == ",".join(cli.RESULT_COLUMNS)


def test_csv_is_independent_of_worker_count():
    sc = from_dict(crossing(termination={"t_max": 20}))
    one = cli.run_batch(sc, [0.0, 1.0], [1, 2], jobs=1)
    two = cli.run_batch(sc, [0.0, 1.0], [1, 2], jobs=2)
    assert cli.results_csv(one) == cli.results_csv(two)
    assert cli.aggregate_csv(one) == cli.aggregate_csv(two)


def test_every_run_appears_once_sorted():
    batch = cli.run_batch(from_dict(tiny()), [1.0, 0.0], [2, 1])
    assert [(r.lam, r.seed) for r in batch.runs] == [(0.0, 1), (0.0, 2), (1.0, 1), (1.0, 2)]
    assert all(r.status in ("collision", "deadlock", "all-goals-reached", "timeout") for r in batch.runs)
    rows = cli.aggregate_csv(batch).splitlines()
    assert len(rows) == 3 and rows[0].split(",") == list(cli.AGGREGATE_COLUMNS)


def test_failed_run_is_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "run_episode", boom)
    batch = cli.run_batch(from_dict(tiny()), [0.0], [1, 2])
    assert batch.n_failed == 2 and batch.runs[0].status == "error" and "boom" in batch.runs[0].error
    assert cli.results_csv(batch).splitlines()[1] == "tiny,0,1,error,,,,,"


def test_worker_cap(monkeypatch):
    monkeypatch.setenv(cli.MAX_WORKERS_ENV, "2")
    assert cli.max_workers(8) == 2
    monkeypatch.delenv(cli.MAX_WORKERS_ENV)
    assert cli.max_workers(8) == 8 and cli.max_workers(0) == 1


def test_seed_and_lambda_parsing():
    assert cli.parse_seeds("1-3,9") == (1, 2, 3, 9)
    assert cli.parse_lambdas("0, 2.5,5") == (0.0, 2.5, 5.0)
    with pytest.raises(ConfigurationError):
        cli.parse_seeds("-3")
    with pytest.raises(ConfigurationError):
        cli.parse_lambdas("zero")


# tick logs and plot data


def test_tick_log_round_trip(tmp_path):
    ep = run_episode(from_dict(crossing(termination={"t_max": 20})), 1.0, 1)
    path = cli.write_tick_log(ep, tmp_path / "ep.jsonl")
    back = cli.read_tick_log(path)
    assert back == cli.RecordedEpisode.from_log(ep)
    for aid in ep.agent_ids:
        assert np.array_equal(back.trajectory(aid)[:, :2], ep.trajectory(aid))


def test_trajectory_files_have_one_row_per_tick_and_round_trip(tmp_path):
    ep = run_episode(from_dict(shortened("swap_symmetric")), 0.0, 1)
    cli.emit_plot_data(ep, tmp_path)
    for aid in ep.agent_ids:
        header, data = cli.read_tsv(tmp_path / f"trajectory_{aid}.tsv")
        assert header == ["tick", "x", "y", "theta", "v"]
        assert data.shape[0] == len(ep.ticks) + 1
        assert np.array_equal(data[:, 1:3], ep.trajectory(aid))
        _, plans = cli.read_tsv(tmp_path / f"plans_{aid}.tsv")
        assert plans.shape[0] == len(ep.ticks) * 21


def test_belief_rows_are_distributions(tmp_path):
    ep = run_episode(from_dict(shortened("two_goal_observer")), 10.0, 1)
    cli.emit_plot_data(ep, tmp_path)
    header, data = cli.read_tsv(tmp_path / "beliefs_robot.tsv")
    assert header == ["tick", "b_A", "b_B"]
    assert data.shape[0] == len(ep.ticks)
    assert np.allclose(data[:, 1] + data[:, 2], 1.0, atol=1e-12)
    assert data[0, 1] == pytest.approx(0.7)


# command line


def test_validate_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--scenario", "swap_symmetric"]) == cli.EXIT_OK
    bad = write(tmp_path, tiny(predictability={"lambdas": [-1.0]}))
    assert cli.main(["validate", "--scenario", str(bad)]) == cli.EXIT_INVALID
    assert "predictability.lambdas[0]" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert cli.main(["validate", "--scenario", str(broken)]) == cli.EXIT_INVALID
    assert cli.main(["validate", "--scenario", str(tmp_path / "missing.json")]) == cli.EXIT_INVALID


def test_run_and_plot_data_commands(tmp_path):
    scen = write(tmp_path, tiny())
    out = tmp_path / "run.csv"
    logs = tmp_path / "logs"
    assert cli.main(["run", "--scenario", str(scen), "--lambda", "1", "--seeds", "2", "--out", str(out), "--log-dir", str(logs)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("tiny,1,2,all-goals-reached,")
    log_file = logs / "tiny_lam1_seed2.jsonl"
    assert log_file.exists()
    assert cli.main(["plot-data", str(log_file), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "trajectory_a.tsv").exists()


def test_sweep_command_writes_both_tables(tmp_path):
    scen = write(tmp_path, tiny())
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--scenario", str(scen), "--seeds", "1-2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5
    assert len((tmp_path / "sweep_aggregate.csv").read_text().splitlines()) == 3


def test_sweep_rejects_bad_arguments(tmp_path):
    scen = write(tmp_path, tiny())
    assert cli.main(["sweep", "--scenario", str(scen), "--lambda", "-1"]) == cli.EXIT_INVALID
    assert cli.main(["sweep", "--scenario", str(scen), "--seeds", "x"]) == cli.EXIT_INVALID


def test_sweep_reports_failed_runs(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "run_episode", lambda *a, **k: 1 / 0)
    scen = write(tmp_path, tiny())
    assert cli.main(["sweep", "--scenario", str(scen), "--seeds", "1", "--out", str(tmp_path / "o.csv")]) == cli.EXIT_RUN_FAILED

import dataclasses

import pytest

from rendergov.configspace import RenderingConfiguration
from rendergov.harness import (
    initialize,
    log_columns,
    oracle_table,
    replay,
    replay_trace,
    reveal_oracle,
    run,
    write_oracle_table,
)


@pytest.fixture(scope="module")
def mini_run(mini_scenario, tmp_path_factory):
    out = tmp_path_factory.mktemp("mini_run")
    return run(mini_scenario, out), out


def test_run_produces_log_and_summary(mini_run):
    result, out = mini_run
    assert result.log_path.exists()
    assert result.summary_path.exists()
    lines = result.log_path.read_text().splitlines()
    assert lines[0].startswith("# rendergov-log v1")
    assert len(lines) == 2 + 240  # schema comment + header + one row per frame


def test_csv_columns_are_fixed_and_documented(mini_scenario, mini_run):
    result, _ = mini_run
    header = result.log_path.read_text().splitlines()[1].split(",")
    assert header == log_columns(mini_scenario)
    assert header[:6] == ["frame", "phase", "s_eff", "budget_watts", "predicted_w", "measured_w"]
    assert "e_worst_shading" in header and "stale_postfx" in header


def test_summary_recomputable_from_csv(mini_run):
    result, _ = mini_run
    lines = result.log_path.read_text().splitlines()
    header = lines[1].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[2:]]
    mean_power = sum(float(r["measured_w"]) for r in rows) / len(rows)
    errors = [float(r["true_error"]) for r in rows if r["true_error"] != ""]
    mean_error = sum(errors) / len(errors)
    refits = sum(r["refit"] == "1" for r in rows)
    selections = sum(r["selection"] == "1" for r in rows)
    s = result.summary
    assert mean_power == pytest.approx(s["governed_mean_power"], rel=1e-12)
    assert mean_error == pytest.approx(s["governed_mean_error"], rel=1e-12)
    assert refits == s["refit_count"]
    assert selections == s["selection_count"]


def test_governed_means_sit_between_replay_baselines(mini_run):
    result, _ = mini_run
    s = result.summary
    assert s["replay_worst_mean_power"] <= s["governed_mean_power"] <= s["replay_best_mean_power"]
    assert s["replay_best_mean_error"] == 0.0
    assert s["governed_mean_error"] <= s["replay_worst_mean_error"]


def test_zero_frame_trace_produces_empty_log(mini_scenario, tmp_path):
    scenario = dataclasses.replace(
        mini_scenario, trace=dataclasses.replace(mini_scenario.trace, frame_count=0)
    )
    result = run(scenario, tmp_path)
    lines = result.log_path.read_text().splitlines()
    assert len(lines) == 2
    assert result.summary["governed_mean_power"] == 0.0


def test_replay_best_config_has_zero_error_and_max_power(mini_scenario):
    best = replay_trace(mini_scenario, mini_scenario.roster.best_config())
    worst = replay_trace(mini_scenario, mini_scenario.roster.worst_config())
    assert best["mean_error"] == 0.0
    assert best["mean_power"] > worst["mean_power"]
    assert worst["mean_error"] > 0.0


def test_replay_artifacts_and_initialization_shared_with_run(mini_scenario, mini_run, tmp_path):
    result = replay(mini_scenario, mini_scenario.roster.best_config(), tmp_path)
    assert result.log_path.exists()
    run_summary = mini_run[0].summary
    assert result.summary["budget_watts"] == run_summary["budget_watts"]
    assert result.summary["p_min_probed"] == run_summary["p_min_probed"]
    assert result.summary["p_max_probed"] == run_summary["p_max_probed"]


def test_replay_rejects_invalid_config(mini_scenario, tmp_path):
    with pytest.raises(ValueError):
        replay(mini_scenario, RenderingConfiguration((9, 9, 9)), tmp_path)


def test_oracle_table_covers_enumeration_with_zero_error_reference(mini_scenario):
    rows = oracle_table(mini_scenario, frame=5)
    assert len(rows) == mini_scenario.roster.config_count
    by_cfg = {cfg: (p, e) for cfg, p, e in rows}
    best = mini_scenario.roster.best_config()
    assert by_cfg[best][1] == 0.0
    worst = mini_scenario.roster.worst_config()
    assert by_cfg[worst][0] == min(p for p, _ in by_cfg.values())


def test_oracle_table_frame_bounds(mini_scenario):
    with pytest.raises(ValueError):
        oracle_table(mini_scenario, frame=mini_scenario.trace.frame_count)


def test_oracle_table_csv(mini_scenario, tmp_path):
    path = write_oracle_table(mini_scenario, 3, tmp_path)
    lines = path.read_text().splitlines()
    assert lines[1] == "config,true_power_w,true_error"
    assert len(lines) == 2 + mini_scenario.roster.config_count


def test_reveal_oracle_exposes_hidden_parameters(mini_scenario):
    doc = reveal_oracle(mini_scenario)
    assert doc["p_min"] == mini_scenario.oracle.saturation.p_min
    assert set(doc["passes"]) == {"shading", "postfx"}
    assert doc["passes"]["shading"]["true_ins_f"] == [400, 240, 110]


def test_initialization_is_deterministic(mini_scenario):
    a = initialize(mini_scenario)
    b = initialize(mini_scenario)
    assert a.p_min_probed == b.p_min_probed
    assert a.probe.saturation == b.probe.saturation
    assert a.error_model.ratios == b.error_model.ratios

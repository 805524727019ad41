"""Simulation harness: initialization, governed runs, pinned replays, and
ground-truth oracle tables, with CSV logs and plain-text summaries.

All outputs are deterministic functions of (scenario, seed): no timestamps, no
environment-dependent content, so identical invocations produce byte-identical
files.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .configspace import RenderingConfiguration, enumerate_configurations
from .governor import Governor, RunLogRecord, budget_watts
from .powermodel import (
    FrameSample,
    PowerCoefficients,
    PowerModel,
    UnitCosts,
    fit_generic,
    model_masks,
    solve_unit_costs,
)
from .quality import ErrorModel, calibrate_ratios, quality_error
from .scenario import Scenario
from .simgpu import (
    ProbeResult,
    empty_trace,
    exact_power,
    measure_power,
    probe_min_power,
    probe_saturation,
    render_frame,
)

CSV_SCHEMA_VERSION = 1

_BASE_COLUMNS = [
    "frame",
    "phase",
    "s_eff",
    "budget_watts",
    "predicted_w",
    "measured_w",
    "selection",
    "refit",
    "reuse",
    "infeasible",
    "degenerate",
    "fit_clamped",
    "fit_residual",
    "cost_residual",
    "bg_request",
    "err_update_pass",
    "err_update_value",
    "true_error",
]


def log_columns(scenario: Scenario) -> list[str]:
    names = [p.name for p in scenario.roster.passes]
    return _BASE_COLUMNS + [f"e_worst_{n}" for n in names] + [f"stale_{n}" for n in names]


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Initialization:
    p_min_probed: float
    probe: ProbeResult
    power_model: PowerModel
    error_model: ErrorModel
    probe_frames_used: int


def initialize(scenario: Scenario) -> Initialization:
    """Probe idle/saturated power, calibrate error ratios, and seed the model.

    Deterministic for a given scenario, so every command that initializes sees
    identical constants.
    """
    roster = scenario.roster
    oracle = scenario.oracle
    probe_opts = scenario.probe

    idle = empty_trace(roster, max(probe_opts.min_power_frames, 1))
    p_min = probe_min_power(oracle, idle, probe_opts.min_power_frames)
    probe = probe_saturation(oracle, p_min, probe_opts)

    ratios = calibrate_ratios(
        lambda cfg, frame: render_frame(scenario.synthesizer, cfg, frame),
        roster,
        scenario.calibration_frames,
    )
    error_model = ErrorModel.initial(ratios)

    n_model = len(roster.model_pass_indices)
    model = PowerModel(
        roster=roster,
        saturation=probe.saturation,
        coefficients=PowerCoefficients.zeros(n_model),
        unit_costs=UnitCosts(0.0, 0.0),
        cost_table=scenario.cost_table,
        fitted_config=scenario.initial_config,
    )

    if scenario.initial_fit_mode == "generic":
        sweep = _generic_sweep_samples(scenario, probe.saturation.per_pass)
        fit = fit_generic(sweep, probe.saturation, model_masks(roster))
        costs = solve_unit_costs(
            fit.coefficients,
            scenario.cost_table,
            roster.best_config(),
            roster,
            fit.identified,
        )
        model = dataclasses.replace(
            model,
            coefficients=fit.coefficients,
            unit_costs=costs.unit_costs,
            fitted_config=roster.best_config(),
            identified=fit.identified,
        )

    return Initialization(
        p_min_probed=p_min,
        probe=probe,
        power_model=model,
        error_model=error_model,
        probe_frames_used=probe.frames_used + probe_opts.min_power_frames,
    )


def _generic_sweep_samples(scenario: Scenario, saturation_per_pass, count: int = 120):
    """Dummy-scene sweep covering the load space between idle and saturation.

    Each sample splits a total load level across the per-pass primitive slots
    with random weights; the level ramps so measured power walks from near P_m
    toward P_M. The ramp tops out below deep saturation, where the log
    transform would amplify measurement noise.
    """
    oracle = scenario.oracle
    roster = scenario.roster
    masks = model_masks(roster)
    cfg = roster.best_config()
    samples = []
    n = len(saturation_per_pass)
    for k in range(count):
        rng = np.random.default_rng([scenario.seed, 424243, k])
        total_load = 1.8 * (k + 1) / count
        weights = rng.uniform(0.1, 1.0, size=(n, 3))
        for i in range(n):
            for j in range(3):
                if not masks[i][j]:
                    weights[i][j] = 0.0
        weights *= total_load / weights.sum()
        prims = tuple(
            (
                weights[i][0] * saturation_per_pass[i][0],
                weights[i][1] * saturation_per_pass[i][1],
                weights[i][2] * saturation_per_pass[i][2],
            )
            for i in range(n)
        )
        power = oracle.exact_power_from_primitives(cfg, prims) + oracle.noise(20_000_000 + k)
        samples.append(FrameSample(max(power, 1e-9), prims))
    return samples


@dataclass(frozen=True)
class RunResult:
    summary: dict
    log_path: Path | None
    summary_path: Path | None


def _write_csv(path: Path, scenario: Scenario, rows: list[list]) -> None:
    columns = log_columns(scenario)
    lines = [
        f"# rendergov-log v{CSV_SCHEMA_VERSION} scenario={scenario.name} seed={scenario.seed}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _record_row(record: RunLogRecord, true_error: float | None) -> list:
    return [
        record.frame,
        record.phase,
        str(record.s_eff),
        record.budget_watts,
        record.predicted_power,
        record.measured_power,
        record.selection,
        record.refit,
        record.reuse,
        record.infeasible,
        record.degenerate,
        record.fit_clamped,
        record.fit_residual,
        record.cost_residual,
        record.bg_request,
        record.err_update_pass,
        record.err_update_value,
        true_error,
        *record.e_worst,
        *record.staleness,
    ]


def _write_summary(path: Path, summary: dict) -> None:
    lines = [f"{key} = {_fmt(value)}" for key, value in summary.items()]
    path.write_text("\n".join(lines) + "\n")


def _true_error(scenario: Scenario, config: RenderingConfiguration, frame: int) -> float:
    if all(lvl == 0 for lvl in config):
        return 0.0
    reference = render_frame(scenario.synthesizer, scenario.roster.best_config(), frame)
    candidate = render_frame(scenario.synthesizer, config, frame)
    return quality_error(reference, candidate)


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def replay_trace(scenario: Scenario, config: RenderingConfiguration) -> dict:
    """Run the trace with one pinned configuration; no governor involved."""
    scenario.roster.validate_config(config)
    powers, errors = [], []
    for frame in range(scenario.trace.frame_count):
        powers.append(measure_power(scenario.oracle, config, frame, scenario.trace))
        if frame % scenario.error_sample_every == 0:
            errors.append(_true_error(scenario, config, frame))
    return {
        "mean_power": _mean(powers),
        "mean_error": _mean(errors),
        "frames": scenario.trace.frame_count,
        "error_samples": len(errors),
    }


def run(scenario: Scenario, out_dir: str | Path | None = None) -> RunResult:
    """Initialization plus the governed frame loop, with min/max-quality
    replays as in-run baselines."""
    init = initialize(scenario)
    gov = Governor(
        roster=scenario.roster,
        config=scenario.governor,
        power_model=init.power_model,
        error_model=init.error_model,
        measure=lambda cfg, frame: measure_power(scenario.oracle, cfg, frame, scenario.trace),
        primitives=lambda cfg, frame: scenario.trace.primitives_for(
            scenario.roster, cfg, frame
        ),
        render=lambda cfg, frame: render_frame(scenario.synthesizer, cfg, frame),
        initial_config=scenario.initial_config,
    )

    rows = []
    powers, errors = [], []
    for frame in range(scenario.trace.frame_count):
        tick = gov.tick(frame)
        true_err = None
        if frame % scenario.error_sample_every == 0:
            true_err = _true_error(scenario, tick.s_eff, frame)
            errors.append(true_err)
        powers.append(tick.record.measured_power)
        rows.append(_record_row(tick.record, true_err))

    best = replay_trace(scenario, scenario.roster.best_config())
    worst = replay_trace(scenario, scenario.roster.worst_config())

    summary = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "mode": scenario.governor.mode,
        "frames": scenario.trace.frame_count,
        "budget_percent": scenario.governor.budget_percent,
        "budget_watts": budget_watts(scenario.governor, init.power_model.saturation),
        "error_budget": scenario.governor.error_budget,
        "p_min_probed": init.p_min_probed,
        "p_max_probed": init.probe.p_max_observed,
        "probe_frames_used": init.probe_frames_used,
        "governed_mean_power": _mean(powers),
        "governed_mean_error": _mean(errors),
        "governed_error_samples": len(errors),
        "selection_count": gov.selection_count,
        "refit_count": gov.refit_count,
        "fit_count": gov.fit_count,
        "infeasible_count": gov.infeasible_count,
        "fit_clamp_total": gov.clamp_total,
        "replay_best_mean_power": best["mean_power"],
        "replay_best_mean_error": best["mean_error"],
        "replay_worst_mean_power": worst["mean_power"],
        "replay_worst_mean_error": worst["mean_error"],
    }

    log_path = summary_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "run_log.csv"
        summary_path = out / "summary.txt"
        _write_csv(log_path, scenario, rows)
        _write_summary(summary_path, summary)
    return RunResult(summary, log_path, summary_path)


def replay(
    scenario: Scenario, config: RenderingConfiguration, out_dir: str | Path | None = None
) -> RunResult:
    """Pinned-configuration replay with the same artifact shapes as a run."""
    init = initialize(scenario)
    budget = budget_watts(scenario.governor, init.power_model.saturation)
    rows = []
    powers, errors = [], []
    for frame in range(scenario.trace.frame_count):
        measured = measure_power(scenario.oracle, config, frame, scenario.trace)
        predicted = exact_power(scenario.oracle, config, frame, scenario.trace)
        true_err = None
        if frame % scenario.error_sample_every == 0:
            true_err = _true_error(scenario, config, frame)
            errors.append(true_err)
        powers.append(measured)
        record = RunLogRecord(
            frame=frame,
            phase="replay",
            s_eff=config,
            budget_watts=budget,
            predicted_power=predicted,
            measured_power=measured,
            e_worst=tuple(0.0 for _ in scenario.roster.passes),
            staleness=tuple(-1 for _ in scenario.roster.passes),
        )
        rows.append(_record_row(record, true_err))

    summary = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "replay_config": str(config),
        "frames": scenario.trace.frame_count,
        "budget_watts": budget,
        "p_min_probed": init.p_min_probed,
        "p_max_probed": init.probe.p_max_observed,
        "mean_power": _mean(powers),
        "mean_error": _mean(errors),
        "error_samples": len(errors),
    }
    log_path = summary_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = str(config).replace("-", "")
        log_path = out / f"replay_{tag}_log.csv"
        summary_path = out / f"replay_{tag}_summary.txt"
        _write_csv(log_path, scenario, rows)
        _write_summary(summary_path, summary)
    return RunResult(summary, log_path, summary_path)


def oracle_table(scenario: Scenario, frame: int) -> list[tuple[RenderingConfiguration, float, float]]:
    """Exhaustive ground truth for one frame: (config, exact power, true error).

    Queries the simulator directly; nothing is fitted or estimated.
    """
    if not 0 <= frame < scenario.trace.frame_count:
        raise ValueError(f"frame {frame} outside the trace [0, {scenario.trace.frame_count})")
    reference = render_frame(scenario.synthesizer, scenario.roster.best_config(), frame)
    rows = []
    for config in enumerate_configurations(scenario.roster):
        power = exact_power(scenario.oracle, config, frame, scenario.trace)
        if all(lvl == 0 for lvl in config):
            err = 0.0
        else:
            err = quality_error(
                reference, render_frame(scenario.synthesizer, config, frame)
            )
        rows.append((config, power, err))
    return rows


def write_oracle_table(scenario: Scenario, frame: int, out_dir: str | Path) -> Path:
    rows = oracle_table(scenario, frame)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"oracle_frame{frame}.csv"
    lines = [
        f"# rendergov-oracle v{CSV_SCHEMA_VERSION} scenario={scenario.name} seed={scenario.seed} frame={frame}",
        "config,true_power_w,true_error",
    ]
    for config, power, err in rows:
        lines.append(f"{config},{_fmt(power)},{_fmt(err)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def reveal_oracle(scenario: Scenario) -> dict:
    """Hidden oracle parameters, for oracle-equivalence tests only."""
    oracle = scenario.oracle
    names = [scenario.roster.passes[i].name for i in scenario.roster.model_pass_indices]
    return {
        "p_min": oracle.saturation.p_min,
        "p_max": oracle.saturation.p_max,
        "chi": oracle.unit_costs.chi,
        "psi": oracle.unit_costs.psi,
        "noise_sigma": oracle.noise_sigma,
        "cost_distortion": oracle.cost_distortion,
        "passes": {
            name: {
                "k_b": oracle.k_b[i],
                "saturation": list(oracle.saturation.per_pass[i]),
                "true_ins_v": oracle.true_costs.ins_v[i],
                "true_ins_f": list(oracle.true_costs.ins_f[i]),
                "true_tex_f": list(oracle.true_costs.tex_f[i]),
            }
            for i, name in enumerate(names)
        },
    }


def write_reveal(scenario: Scenario, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "oracle_reveal.json"
    path.write_text(json.dumps(reveal_oracle(scenario), indent=2, sort_keys=True) + "\n")
    return path

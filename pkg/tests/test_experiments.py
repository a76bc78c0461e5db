import csv
import math
import os
from dataclasses import replace

import pytest

from nmpc import experiments
from nmpc.experiments import (
    DELAY_SPLIT,
    HORIZON_SWEEP,
    LOSS_SWEEP,
    MIXED,
    MULTI_STEP,
    SINE_COMPARE,
    ExperimentSpec,
    compare_controllers,
    expand_grid,
    experiment_from_dict,
    load_experiment,
    mean_by_point,
    repetition_seed,
    run_experiment,
    trend_checks,
)
from nmpc.netsim import ChannelConfig
from nmpc.scenario import ConfigError, ScenarioConfig, StepReference

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def _delayed(cfg: ScenarioConfig, delay: float) -> ScenarioConfig:
    return replace(cfg, fwd_channel=ChannelConfig(base_delay=delay),
                   bwd_channel=ChannelConfig(base_delay=delay))


def _by_point(result, metric):
    return {row["point"]: row[metric] for row in result.rows}


def test_expand_grid_point_labels(sine_scenario):
    points = expand_grid(ExperimentSpec(HORIZON_SWEEP, sine_scenario, grid=(5, 30)))
    assert [p.labels["point"] for p in points] == ["5", "30"]
    assert points[1].scenario.mpc.horizon == 30

    points = expand_grid(ExperimentSpec(DELAY_SPLIT, sine_scenario, grid=(0.0, 1.0), total_rtt=0.3))
    assert [(p.scenario.fwd_channel.base_delay, p.scenario.bwd_channel.base_delay) for p in points] == \
        [(0.0, 0.3), (0.3, 0.0)]
    assert points[0].labels["bwd_delay_ms"] == 300.0

    points = expand_grid(ExperimentSpec(LOSS_SWEEP, sine_scenario, grid=(0.1,)))
    assert [p.labels["point"] for p in points] == ["fwd/0.1", "bwd/0.1"]
    assert points[0].scenario.fwd_channel.loss_rate == 0.1
    assert points[0].scenario.bwd_channel.loss_rate == 0.0

    points = expand_grid(ExperimentSpec(SINE_COMPARE, sine_scenario, grid=((0.1, 0.1),)))
    assert [p.labels["point"] for p in points] == ["0.1/0.1/mpc", "0.1/0.1/pid"]
    assert points[1].scenario.controller_kind == "pid"

    points = expand_grid(ExperimentSpec(MIXED, sine_scenario, delay=0.1, loss=0.05))
    assert [p.labels["point"] for p in points] == ["0/clean", "1/delay", "2/delay_loss"]
    assert points[2].scenario.bwd_channel.loss_rate == 0.05

    step = replace(sine_scenario, reference=StepReference(target=1.0, at=0.5, initial=0.2))
    points = expand_grid(ExperimentSpec(MULTI_STEP, step, grid=(0.5,)))
    assert points[0].scenario.reference == StepReference(target=0.7, at=0.5, initial=0.2)
    assert points[0].labels["step"] == 0.5


def test_experiment_spec_validation(sine_scenario):
    with pytest.raises(ConfigError):
        ExperimentSpec("bogus", sine_scenario)
    with pytest.raises(ConfigError):
        ExperimentSpec(MIXED, sine_scenario, repetitions=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(MIXED, sine_scenario, ideal="perfect")
    assert ExperimentSpec(SINE_COMPARE, sine_scenario).effective_ideal == "reference"
    assert ExperimentSpec(DELAY_SPLIT, sine_scenario).effective_ideal == "closed_loop"


def test_repetition_seeds():
    assert repetition_seed(11, 0) == 11
    seeds = {repetition_seed(11, rep) for rep in range(5)}
    assert len(seeds) == 5
    assert repetition_seed(11, 3) == repetition_seed(11, 3)


def test_trend_checks_on_synthetic_rows():
    def rows(values):
        return [{"point": k, "status": "ok", "rss": v} for k, v in values.items()]

    checks = dict((n, ok) for n, ok, _ in trend_checks(DELAY_SPLIT, rows({"0.0": 0.1, "0.5": 0.2, "1.0": 0.3})))
    assert checks["rss_min_all_backward"] and checks["rss_max_all_forward"]

    checks = dict((n, ok) for n, ok, _ in trend_checks(DELAY_SPLIT, rows({"0.0": 0.4, "0.5": 0.2, "1.0": 0.3})))
    assert not checks["rss_min_all_backward"]

    checks = trend_checks(MIXED, rows({"0/clean": 0.1}))
    assert checks == [(f"{MIXED}_complete", False, checks[0][2])]


def test_delay_split_tolerates_a_drop_only_with_jitter():
    rows = [{"point": k, "status": "ok", "rss": v}
            for k, v in {"0.0": 0.10, "0.5": 0.21, "0.6": 0.20, "1.0": 0.30}.items()]
    name = "rss_non_decreasing_in_forward_share"
    assert not dict((n, ok) for n, ok, _ in trend_checks(DELAY_SPLIT, rows))[name]
    assert dict((n, ok) for n, ok, _ in trend_checks(DELAY_SPLIT, rows, jittered=True))[name]

    rows[2]["rss"] = 0.18
    assert not dict((n, ok) for n, ok, _ in trend_checks(DELAY_SPLIT, rows, jittered=True))[name]


def test_multistep_check_fails_when_target_never_reached():
    def rows(rise):
        return [{"point": k, "status": "ok", "overshoot": 0.0, "rise_delay": v} for k, v in rise.items()]

    checks = dict((n, ok) for n, ok, _ in trend_checks(MULTI_STEP, rows({"0.5": 1.2, "1.0": 1.3, "1.5": 1.4})))
    assert checks["rise_delay_non_decreasing_in_step"]
    checks = dict((n, ok) for n, ok, _ in trend_checks(MULTI_STEP, rows({"0.5": 1.2, "1.0": math.inf, "1.5": math.inf})))
    assert not checks["rise_delay_non_decreasing_in_step"]
    assert checks["overshoot_non_decreasing_in_step"]


def test_loss_curves_allow_only_a_small_flat_dip():
    def rows(fwd, bwd):
        out = [{"point": f"fwd/{r}", "status": "ok", "rss": v} for r, v in zip((0.0, 0.1, 0.2), fwd)]
        return out + [{"point": f"bwd/{r}", "status": "ok", "rss": v} for r, v in zip((0.0, 0.1, 0.2), bwd)]

    checks = dict((n, ok) for n, ok, _ in trend_checks(LOSS_SWEEP, rows((1.0, 0.995, 1.0), (1.0, 1.5, 2.0))))
    assert checks["rss_non_decreasing_fwd_loss"]
    assert checks["bwd_loss_ge_fwd_loss"]
    checks = dict((n, ok) for n, ok, _ in trend_checks(LOSS_SWEEP, rows((1.0, 1.2, 1.1), (1.0, 1.1, 1.05))))
    assert not checks["rss_non_decreasing_fwd_loss"]
    assert not checks["bwd_loss_ge_fwd_loss"]


def test_mean_by_point_skips_failures():
    rows = [
        {"point": "a", "status": "ok", "rss": 1.0},
        {"point": "a", "status": "ok", "rss": 3.0},
        {"point": "a", "status": "failed", "rss": ""},
    ]
    assert mean_by_point(rows, "rss") == {"a": 2.0}


def test_horizon_sweep_long_horizon_wins(sine_scenario):
    spec = ExperimentSpec(HORIZON_SWEEP, _delayed(sine_scenario, 0.1), grid=(5, 30))
    result = run_experiment(spec, workers=1)
    ise = _by_point(result, "ise")
    assert ise["30"] <= ise["5"]


def test_delay_split_forward_delay_hurts_most(sine_scenario):
    spec = ExperimentSpec(DELAY_SPLIT, sine_scenario, grid=(0.0, 0.5, 1.0), total_rtt=0.3)
    result = run_experiment(spec, workers=1)
    rss = _by_point(result, "rss")
    assert min(rss, key=rss.get) == "0.0"
    assert max(rss, key=rss.get) == "1.0"


def test_multistep_response_grows_with_step(sine_scenario):
    base = replace(_delayed(sine_scenario, 0.1),
                   reference=StepReference(target=1.0, at=0.5), reference_joints=(0,))
    result = run_experiment(ExperimentSpec(MULTI_STEP, base, grid=(0.5, 1.0, 1.5)), workers=1)
    rise = [_by_point(result, "rise_delay")[p] for p in ("0.5", "1.0", "1.5")]
    assert all(math.isfinite(r) for r in rise)
    assert rise[-1] < 4.0
    for metric in ("overshoot", "rise_delay"):
        values = [_by_point(result, metric)[p] for p in ("0.5", "1.0", "1.5")]
        for smaller, larger in zip(values, values[1:]):
            assert larger >= smaller
    assert all(ok for _, ok, _ in result.checks)


def test_mpc_tracks_delayed_sine_better_than_pid(sine_scenario):
    spec = ExperimentSpec(SINE_COMPARE, sine_scenario, grid=((0.1, 0.1),))
    result = run_experiment(spec, workers=1)
    rss = _by_point(result, "rss")
    assert rss["0.1/0.1/mpc"] < rss["0.1/0.1/pid"]
    assert all(row["status"] == "ok" for row in result.rows)


def test_loss_raises_rss(sine_scenario):
    result = run_experiment(ExperimentSpec(LOSS_SWEEP, sine_scenario, grid=(0.0, 0.2)), workers=1)
    rss = _by_point(result, "rss")
    # Lossless points replay the delay-free ideal exactly
    assert rss["fwd/0.0"] == 0.0
    assert rss["bwd/0.0"] == 0.0
    assert rss["fwd/0.2"] > 0.0
    assert rss["bwd/0.2"] > 0.0


def test_mixed_impairments_order(sine_scenario):
    spec = ExperimentSpec(MIXED, replace(sine_scenario, duration=4.0), delay=0.1, loss=0.05)
    rss = _by_point(run_experiment(spec, workers=1), "rss")
    assert rss["0/clean"] == 0.0
    assert rss["1/delay"] > 0.0
    assert rss["2/delay_loss"] > 0.0


def test_outputs_written(sine_scenario, tmp_path):
    spec = ExperimentSpec(HORIZON_SWEEP, replace(sine_scenario, duration=0.5), grid=(5, 10), repetitions=2)
    result = run_experiment(spec, out_dir=str(tmp_path), workers=1)
    assert len(result.rows) == 4
    assert [(r["point"], r["rep"]) for r in result.rows] == [("5", 0), ("5", 1), ("10", 0), ("10", 1)]
    with open(result.summary_path) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert rows[0]["kind"] == HORIZON_SWEEP
    assert len(os.listdir(tmp_path / "traces")) == 4
    with open(result.plot_path) as f:
        compile(f.read(), result.plot_path, "exec")


def test_process_pool_matches_serial(sine_scenario):
    spec = ExperimentSpec(DELAY_SPLIT, replace(sine_scenario, duration=0.5), grid=(0.0, 1.0), total_rtt=0.1)
    serial = run_experiment(spec, workers=1)
    pooled = run_experiment(spec, workers=2)
    assert serial.rows == pooled.rows


def test_failed_point_is_recorded(sine_scenario, monkeypatch):
    real = experiments.run_scenario

    def flaky(cfg):
        if cfg.mpc.horizon == 10:
            raise RuntimeError("solver exploded")
        return real(cfg)

    monkeypatch.setattr(experiments, "run_scenario", flaky)
    spec = ExperimentSpec(HORIZON_SWEEP, replace(sine_scenario, duration=0.3), grid=(5, 10))
    result = run_experiment(spec, workers=1)
    assert result.failed == 1
    failed = [r for r in result.rows if r["status"] == "failed"][0]
    assert failed["point"] == "10"
    assert "solver exploded" in failed["error"]


def test_compare_controllers_writes_reports(sine_scenario, tmp_path):
    mpc, pid = compare_controllers(_delayed(sine_scenario, 0.1), out_dir=str(tmp_path))
    assert mpc.metadata["controller"] == "mpc"
    assert pid.metadata["controller"] == "pid"
    assert mpc.metadata["ideal"] == "reference"
    assert mpc.rss < pid.rss
    assert sorted(os.listdir(tmp_path)) == [
        "compare_mpc.csv", "compare_mpc.json", "compare_pid.csv", "compare_pid.json"]


@pytest.mark.parametrize("name", [
    "delay_split.json", "horizon_sweep.json", "loss_sweep.json",
    "mixed.json", "multistep.json", "sine_compare.json",
])
def test_shipped_experiments_load(name):
    spec = load_experiment(os.path.join(CONFIG_DIR, name))
    assert expand_grid(spec)


def test_experiment_from_dict_errors():
    with pytest.raises(ConfigError):
        experiment_from_dict({"grid": [1]})
    with pytest.raises(ConfigError):
        experiment_from_dict({"kind": "mixed", "colour": "red"})
    with pytest.raises(ConfigError):
        experiment_from_dict({"kind": "mixed", "base": {"duration": -1}})
    spec = experiment_from_dict({"kind": "sine_compare", "grid": [[0.0, 0.0]]})
    assert spec.effective_grid == ((0.0, 0.0),)


@pytest.mark.parametrize("name", [
    "horizon_sweep.json", "delay_split.json", "loss_sweep.json",
    "mixed.json", "multistep.json", "sine_compare.json",
])
def test_shipped_experiment_trends_hold(name):
    spec = load_experiment(os.path.join(CONFIG_DIR, name))
    result = run_experiment(spec, workers=1)
    assert result.failed == 0
    failing = [f"{n}: {detail}" for n, ok, detail in result.checks if not ok]
    assert result.checks
    assert not failing, failing

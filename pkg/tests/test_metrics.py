import math

import numpy as np
import pytest

from nmpc.dynamics import ANGLE_CLAMPED, InvalidArgumentError, PlantConfig
from nmpc.metrics import (
    MetricReport,
    ise,
    ise_per_joint,
    metric_report,
    overshoot,
    rise_delay,
    rss,
    rss_per_joint,
    saturation_fraction,
)
from nmpc.scenario import scenario_hash
from nmpc.simloop import RunResult, TraceRecord, run_scenario


def _result(angles, refs=None, Ts=0.1, flags=None):
    angles = np.asarray(angles, dtype=float)
    if angles.ndim == 1:
        angles = angles[:, None]
    refs = np.zeros_like(angles) if refs is None else np.asarray(refs, dtype=float).reshape(angles.shape)
    records = []
    for k, row in enumerate(angles):
        J = len(row)
        records.append(TraceRecord(
            tick=k,
            time=k * Ts,
            states=tuple((float(a), 0.0) for a in row),
            references=tuple((float(r), 0.0) for r in refs[k]),
            controls=(0.0,) * J,
            flags=tuple(flags[k]) if flags is not None else (0,) * J,
        ))
    return RunResult(records=records)


def test_ise_zero_when_on_target():
    assert ise(_result(np.ones((10, 6)), np.ones((10, 6)))) == 0.0


def test_ise_constant_error_on_six_joints():
    assert ise(_result(np.full((50, 6), 0.1))) == pytest.approx(0.01)


def test_ise_ramp_error():
    # Error k * 0.1 / n over k = 0..n-1 approaches (0.1)^2 / 3 as n grows
    n = 1000
    errors = np.arange(n) * 0.1 / n
    assert ise(errors, np.zeros(n)) == pytest.approx(0.1 ** 2 / 3, rel=1e-2)


def test_ise_on_arrays_and_joint_subset():
    actual = np.array([[0.1, 1.0], [0.1, 1.0]])
    target = np.zeros((2, 2))
    np.testing.assert_allclose(ise_per_joint(actual, target), [0.01, 1.0])
    assert ise(actual, target, joints=[0]) == pytest.approx(0.01)
    with pytest.raises(InvalidArgumentError):
        ise(actual)


def test_rss_examples():
    a = np.linspace(0, 1, 20)
    assert rss(a, a) == 0.0
    assert rss(a + 0.5, a) == pytest.approx(0.25)
    np.testing.assert_allclose(rss_per_joint(np.column_stack([a, a + 1.0]), np.column_stack([a, a])), [0.0, 1.0])


def test_rss_of_phase_shifted_sine():
    t = np.arange(0, 40 * math.pi, 0.001)
    ideal = np.sin(t)
    lagged = np.sin(t - 0.2)
    # Mean of (sin t - sin(t - d))^2 is 1 - cos d
    assert rss(lagged, ideal) == pytest.approx(1 - math.cos(0.2), rel=1e-2)


def test_metrics_reject_bad_input():
    with pytest.raises(InvalidArgumentError):
        rss(np.zeros(5), np.zeros(6))
    with pytest.raises(InvalidArgumentError):
        rss(np.array([]), np.array([]))
    with pytest.raises(InvalidArgumentError):
        ise(RunResult(records=[]))


def test_metrics_scale_with_square_of_error():
    a = np.linspace(-1, 1, 30)
    base = rss(a * 0.1, np.zeros(30))
    assert rss(a * 0.3, np.zeros(30)) == pytest.approx(9 * base)


def test_overshoot_and_rise_delay():
    angles = [0.0, 0.2, 0.5, 0.9, 1.1, 1.05, 1.0, 1.0]
    result = _result(angles)
    assert overshoot(result, 0.0, 1.0) == pytest.approx(0.1)
    assert rise_delay(result, 0.0, 1.0) == pytest.approx(0.3)
    assert rise_delay(result, 0.0, 1.0, fraction=0.5) == pytest.approx(0.2)
    assert rise_delay(result, 0.0, 2.0) == math.inf
    assert overshoot(_result([0.0, 0.5, 0.8]), 0.0, 1.0) == 0.0


def test_step_metrics_respect_direction_and_window():
    down = _result([1.0, 0.6, 0.3, -0.1, 0.0, 0.0])
    assert overshoot(down, 1.0, 0.0) == pytest.approx(0.1)
    assert rise_delay(down, 1.0, 0.0, t_from=0.1) == pytest.approx(0.2)
    with pytest.raises(InvalidArgumentError):
        overshoot(down, 0.5, 0.5)
    with pytest.raises(InvalidArgumentError):
        overshoot(down, 0.0, 1.0, t_from=5.0)


def test_saturation_fraction():
    flags = [(0,), (ANGLE_CLAMPED,), (0,), (0,)]
    result = _result([0.0, 6.0, 0.0, 0.0], flags=flags)
    assert saturation_fraction(result) == 0.25
    assert saturation_fraction(_result([0.0, 6.0, 6.0, 0.0]), PlantConfig()) == 0.5


def test_metric_report_against_reference_and_ideal():
    result = _result(np.full((10, 2), 0.1), np.zeros((10, 2)))
    report = metric_report(result)
    assert report.metadata["ideal"] == "reference"
    assert report.ise == pytest.approx(0.01)
    assert report.rss == pytest.approx(0.01)
    assert report.n == 10

    ideal = np.full((10, 2), 0.1)
    report = metric_report(result, ideal, metadata={"point": "x"})
    assert report.metadata == {"ideal": "closed_loop", "point": "x"}
    assert report.rss == 0.0
    assert MetricReport.from_json(report.to_json()) == report


def test_metric_report_records_scenario(step_scenario):
    result = run_scenario(step_scenario)
    report = metric_report(result)
    assert report.metadata["scenario_hash"] == scenario_hash(step_scenario)
    assert report.metadata["seed"] == step_scenario.seed

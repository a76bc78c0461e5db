"""
Experiment suites over scenario grids

Each experiment expands a base scenario into grid points, runs every point
(optionally in a process pool), scores it, and writes a summary CSV plus a
standalone plotting script. Rows are sorted by grid key before writing, so
the output does not depend on execution order.
"""

import csv
import json
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from nmpc import settings
from nmpc.metrics import MetricReport, metric_report, overshoot, rise_delay, saturation_fraction
from nmpc.netsim import derive_seed
from nmpc.scenario import ConfigError, ScenarioConfig, StepReference, scenario_from_dict, scenario_hash
from nmpc.simloop import RunResult, ideal_scenario, run_scenario, write_trace_csv

logger = logging.getLogger(__name__)

HORIZON_SWEEP = "horizon_sweep"
MULTI_STEP = "multistep"
SINE_COMPARE = "sine_compare"
DELAY_SPLIT = "delay_split"
LOSS_SWEEP = "loss_sweep"
MIXED = "mixed"

EXPERIMENT_KINDS = (HORIZON_SWEEP, MULTI_STEP, SINE_COMPARE, DELAY_SPLIT, LOSS_SWEEP, MIXED)

DEFAULT_GRIDS = {
    HORIZON_SWEEP: (5, 10, 15, 20, 25, 30, 35, 40, 45, 50),
    MULTI_STEP: (0.5, 1.0, 1.5),
    SINE_COMPARE: ((0.0, 0.0), (0.1, 0.1)),
    DELAY_SPLIT: (0.0, 0.2, 0.4, 0.6, 0.8, 1.0),
    LOSS_SWEEP: (0.0, 0.05, 0.1, 0.15, 0.2),
    MIXED: ("clean", "delay", "delay_loss"),
}

MIXED_CASES = {"clean": 0, "delay": 1, "delay_loss": 2}

# One adjacent drop of at most this much is allowed in the delay split when channels jitter
SPLIT_JITTER_TOLERANCE = 0.05
# Loss curves count as flat within this relative drop; the loss draws are random
LOSS_FLAT_TOLERANCE = 0.01

SUMMARY_FIELDS = [
    "kind", "point", "rep", "seed", "controller", "horizon", "step",
    "fwd_delay_ms", "bwd_delay_ms", "fwd_loss", "bwd_loss",
    "ise", "rss", "overshoot", "rise_delay", "saturation", "status", "error",
]


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid: Tuple = ()
    repetitions: int = 1
    name: str = ""
    # delay_split: total RTT held fixed while the forward share varies
    total_rtt: float = 0.3
    # mixed: one-way delay and per-direction loss of the impaired cases
    delay: float = 0.1
    loss: float = 0.05
    # RSS ideal: "closed_loop" or "reference"; None picks per kind
    ideal: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment kind must be one of {', '.join(EXPERIMENT_KINDS)}, got {self.kind!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.ideal not in (None, "closed_loop", "reference"):
            raise ConfigError(f"ideal must be 'closed_loop' or 'reference', got {self.ideal!r}")
        if self.total_rtt < 0 or self.delay < 0 or not 0 <= self.loss <= 1:
            raise ConfigError("total_rtt, delay and loss must be non-negative (loss <= 1)")
        if len(self.effective_grid) == 0:
            raise ConfigError("experiment grid must not be empty")

    @property
    def effective_grid(self) -> Tuple:
        return tuple(self.grid) if self.grid else DEFAULT_GRIDS[self.kind]

    @property
    def effective_ideal(self) -> str:
        if self.ideal is not None:
            return self.ideal
        return "reference" if self.kind == SINE_COMPARE else "closed_loop"

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass(frozen=True)
class GridPoint:
    key: Tuple
    labels: Dict
    scenario: ScenarioConfig


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: List[Dict]
    checks: List[Tuple[str, bool, str]]
    summary_path: Optional[str] = None
    plot_path: Optional[str] = None

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r["status"] != "ok")


def _with_channels(cfg: ScenarioConfig, fwd_delay: float, bwd_delay: float,
                   fwd_loss: Optional[float] = None, bwd_loss: Optional[float] = None) -> ScenarioConfig:
    fwd = replace(cfg.fwd_channel, base_delay=fwd_delay, jitter=min(cfg.fwd_channel.jitter, fwd_delay))
    bwd = replace(cfg.bwd_channel, base_delay=bwd_delay, jitter=min(cfg.bwd_channel.jitter, bwd_delay))
    if fwd_loss is not None:
        fwd = replace(fwd, loss_rate=fwd_loss)
    if bwd_loss is not None:
        bwd = replace(bwd, loss_rate=bwd_loss)
    return replace(cfg, fwd_channel=fwd, bwd_channel=bwd)


def _channel_labels(cfg: ScenarioConfig) -> Dict:
    return {
        "fwd_delay_ms": round(cfg.fwd_channel.base_delay * 1000.0, 6),
        "bwd_delay_ms": round(cfg.bwd_channel.base_delay * 1000.0, 6),
        "fwd_loss": cfg.fwd_channel.loss_rate,
        "bwd_loss": cfg.bwd_channel.loss_rate,
        "controller": cfg.controller_kind,
        "horizon": cfg.mpc.horizon,
    }


def expand_grid(spec: ExperimentSpec) -> List[GridPoint]:
    """Grid points of one repetition, in grid order"""
    base = spec.base
    points = []
    for value in spec.effective_grid:
        if spec.kind == HORIZON_SWEEP:
            cfgs = [((int(value),), replace(base, mpc=replace(base.mpc, horizon=int(value))), {})]
        elif spec.kind == MULTI_STEP:
            initial = base.reference.initial if isinstance(base.reference, StepReference) else 0.0
            at = base.reference.at if isinstance(base.reference, StepReference) else 0.0
            ref = StepReference(target=initial + float(value), at=at, initial=initial)
            cfgs = [((float(value),), replace(base, reference=ref), {"step": float(value)})]
        elif spec.kind == SINE_COMPARE:
            fwd_delay, bwd_delay = (float(v) for v in value)
            cfgs = []
            for kind in ("mpc", "pid"):
                cfg = _with_channels(replace(base, controller_kind=kind), fwd_delay, bwd_delay)
                cfgs.append(((fwd_delay, bwd_delay, kind), cfg, {}))
        elif spec.kind == DELAY_SPLIT:
            share = float(value)
            fwd_delay = round(spec.total_rtt * share, 9)
            cfg = _with_channels(base, fwd_delay, round(spec.total_rtt - fwd_delay, 9))
            cfgs = [((share,), cfg, {})]
        elif spec.kind == LOSS_SWEEP:
            rate = float(value)
            cfgs = [
                (("fwd", rate), _with_channels(base, base.fwd_channel.base_delay, base.bwd_channel.base_delay,
                                               fwd_loss=rate, bwd_loss=0.0), {}),
                (("bwd", rate), _with_channels(base, base.fwd_channel.base_delay, base.bwd_channel.base_delay,
                                               fwd_loss=0.0, bwd_loss=rate), {}),
            ]
        else:
            case = str(value)
            if case == "clean":
                cfg = _with_channels(base, 0.0, 0.0, 0.0, 0.0)
            elif case == "delay":
                cfg = _with_channels(base, spec.delay, spec.delay, 0.0, 0.0)
            elif case == "delay_loss":
                cfg = _with_channels(base, spec.delay, spec.delay, spec.loss, spec.loss)
            else:
                raise ConfigError(f"unknown mixed case {case!r}")
            cfgs = [((MIXED_CASES[case], case), cfg, {})]

        for key, cfg, extra in cfgs:
            labels = {**_channel_labels(cfg), **extra, "point": "/".join(str(k) for k in key)}
            points.append(GridPoint(key=key, labels=labels, scenario=cfg))
    return points


def repetition_seed(base_seed: int, rep: int) -> int:
    if rep == 0:
        return base_seed
    return derive_seed(base_seed, f"rep{rep}") >> 1


def metric_joints(cfg: ScenarioConfig) -> Optional[Tuple[int, ...]]:
    """Joints scored by the metrics: the moving ones when a subset follows the reference"""
    return cfg.reference_joints


@lru_cache(maxsize=32)
def _ideal_angles(scenario_json: str) -> np.ndarray:
    cfg = ScenarioConfig.from_json(scenario_json)
    return run_scenario(cfg).angles()


def score_run(result: RunResult, ideal: str = "closed_loop") -> MetricReport:
    """MetricReport of one run against the chosen ideal"""
    cfg = result.scenario
    if ideal == "closed_loop":
        angles = _ideal_angles(ideal_scenario(cfg).to_json())
        return metric_report(result, angles, joints=metric_joints(cfg), ideal_kind="closed_loop")
    return metric_report(result, None, joints=metric_joints(cfg))


def _step_metrics(result: RunResult) -> Dict:
    cfg = result.scenario
    ref = cfg.reference
    if not isinstance(ref, StepReference) or ref.target == ref.initial:
        return {}
    joint = cfg.reference_joints[0] if cfg.reference_joints else 0
    return {
        "overshoot": overshoot(result, ref.initial, ref.target, joint=joint, t_from=ref.at),
        "rise_delay": rise_delay(result, ref.initial, ref.target, joint=joint, t_from=ref.at),
    }


def run_point(point: GridPoint, rep: int, spec: ExperimentSpec,
              trace_dir: Optional[str] = None) -> Dict:
    """Run and score one grid point; failures come back as rows, not exceptions"""
    cfg = replace(point.scenario, seed=repetition_seed(point.scenario.seed, rep))
    row = {name: "" for name in SUMMARY_FIELDS}
    row.update(point.labels)
    row.update({"kind": spec.kind, "rep": rep, "seed": cfg.seed, "status": "ok"})
    try:
        result = run_scenario(cfg)
        report = score_run(result, spec.effective_ideal)
        row["ise"] = report.ise
        row["rss"] = report.rss
        row["saturation"] = saturation_fraction(result, cfg.plant_config())
        row.update(_step_metrics(result))
        if trace_dir is not None:
            name = f"{spec.kind}_{_slug(point.labels['point'])}_rep{rep}.csv"
            write_trace_csv(result, os.path.join(trace_dir, name))
    except Exception as e:
        logger.error(f"point {point.labels['point']} rep {rep} failed: {e}", exc_info=True)
        row["status"] = "failed"
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def _run_point_job(args) -> Tuple[Tuple, int, Dict]:
    point, rep, spec, trace_dir = args
    return point.key, rep, run_point(point, rep, spec, trace_dir)


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in text)


def run_experiment(spec: ExperimentSpec, out_dir: Optional[str] = None,
                   workers: Optional[int] = None) -> ExperimentResult:
    """
    Run every grid point and repetition of an experiment

    Args:
        spec: experiment description
        out_dir: where traces, summary.csv and the plot script go (None: nothing written)
        workers: process pool size; 1 runs in-process (default NMPC_WORKERS)

    Returns:
        ExperimentResult with rows sorted by (grid key, repetition)
    """
    workers = workers or settings.WORKERS
    points = expand_grid(spec)
    jobs = [(p, rep) for p in points for rep in range(spec.repetitions)]
    trace_dir = None
    if out_dir is not None:
        trace_dir = os.path.join(out_dir, "traces")
        os.makedirs(trace_dir, exist_ok=True)

    logger.info("=" * 80)
    logger.info(f"Experiment: {spec.label} ({spec.kind})")
    logger.info(f"Grid points: {len(points)}  repetitions: {spec.repetitions}  workers: {workers}")
    logger.info(f"Base scenario: {scenario_hash(spec.base)[:16]}")
    logger.info("=" * 80)

    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            args = [(p, rep, spec, trace_dir) for p, rep in jobs]
            results = list(pool.map(_run_point_job, args))
    else:
        for p, rep in jobs:
            results.append((p.key, rep, run_point(p, rep, spec, trace_dir)))
            _log_row(results[-1][2])

    rows = [row for _, _, row in sorted(results, key=lambda r: (_sort_key(r[0]), r[1]))]
    jittered = spec.base.fwd_channel.jitter > 0 or spec.base.bwd_channel.jitter > 0
    checks = trend_checks(spec.kind, rows, jittered=jittered)
    result = ExperimentResult(spec=spec, rows=rows, checks=checks)
    if out_dir is not None:
        result.summary_path = write_summary_csv(rows, os.path.join(out_dir, "summary.csv"))
        result.plot_path = write_plot_script(spec.kind, "summary.csv", os.path.join(out_dir, f"plot_{spec.kind}.py"))
    _log_checks(spec, result)
    return result


def _sort_key(key: Tuple) -> Tuple:
    return tuple((0, k, "") if isinstance(k, (int, float)) else (1, 0, str(k)) for k in key)


def _log_row(row: Dict) -> None:
    if row["status"] == "ok":
        logger.info(f"  {row['point']:<24} rep={row['rep']} ise={row['ise']:.6f} rss={row['rss']:.6f}")


def _log_checks(spec: ExperimentSpec, result: ExperimentResult) -> None:
    logger.info("=" * 80)
    logger.info(f"TREND CHECKS: {spec.label}")
    logger.info("=" * 80)
    for name, passed, detail in result.checks:
        logger.info(f"  [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    if result.failed:
        logger.warning(f"{result.failed} point(s) failed")
    if result.summary_path:
        logger.info(f"Summary saved to: {result.summary_path}")
    logger.info("=" * 80)


def write_summary_csv(rows: Sequence[Dict], path: str) -> str:
    with open(path, "w", newline="") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in SUMMARY_FIELDS})
    return path


def mean_by_point(rows: Sequence[Dict], metric: str) -> Dict[str, float]:
    """Mean of a metric over repetitions, per point label (failed rows skipped)"""
    values = defaultdict(list)
    for row in rows:
        if row["status"] == "ok" and row.get(metric) not in ("", None):
            values[row["point"]].append(float(row[metric]))
    return {k: float(np.mean(v)) for k, v in values.items()}


def _non_decreasing(values: Sequence[float], tolerance: float = 0.0) -> Tuple[int, float]:
    """(violations, worst relative drop) over adjacent pairs"""
    violations, worst = 0, 0.0
    for a, b in zip(values, values[1:]):
        if b < a:
            drop = (a - b) / a if a > 0 else math.inf
            if drop > tolerance:
                violations += 1
            worst = max(worst, drop)
    return violations, worst


def trend_checks(kind: str, rows: Sequence[Dict], jittered: bool = False) -> List[Tuple[str, bool, str]]:
    """
    Expected orderings of an experiment's results

    Args:
        jittered: the base scenario has channel jitter; the delay split then
            tolerates one adjacent drop of at most 5%, otherwise none

    Returns:
        (name, passed, detail) tuples; missing points make a check fail
    """
    checks: List[Tuple[str, bool, str]] = []
    try:
        if kind == HORIZON_SWEEP:
            ise = {int(k): v for k, v in mean_by_point(rows, "ise").items()}
            checks.append(("ise_n30_le_n5", ise[30] <= ise[5], f"ISE(30)={ise[30]:.6g} ISE(5)={ise[5]:.6g}"))
            tail = [ise[n] for n in sorted(ise) if n >= 30]
            spread = (max(tail) - min(tail)) / max(tail) if max(tail) > 0 else 0.0
            checks.append(("ise_plateau_n_ge_30", spread < 0.10, f"relative spread {spread:.3%}"))
        elif kind == DELAY_SPLIT:
            rss = {float(k): v for k, v in mean_by_point(rows, "rss").items()}
            shares = sorted(rss)
            values = [rss[s] for s in shares]
            checks.append(("rss_min_all_backward", min(rss, key=rss.get) == shares[0], _fmt(rss)))
            checks.append(("rss_max_all_forward", max(rss, key=rss.get) == shares[-1], _fmt(rss)))
            violations, worst = _non_decreasing(values)
            allowed = jittered and violations == 1 and worst <= SPLIT_JITTER_TOLERANCE
            checks.append(("rss_non_decreasing_in_forward_share", violations == 0 or allowed,
                           f"{violations} violation(s), worst drop {worst:.2%}"))
        elif kind == LOSS_SWEEP:
            rss = mean_by_point(rows, "rss")
            by_dir = {d: {float(k.split("/")[1]): v for k, v in rss.items() if k.startswith(d + "/")}
                      for d in ("fwd", "bwd")}
            for d, series in by_dir.items():
                violations, worst = _non_decreasing([series[r] for r in sorted(series)], LOSS_FLAT_TOLERANCE)
                checks.append((f"rss_non_decreasing_{d}_loss", violations == 0,
                               f"{violations} violation(s), worst drop {worst:.2%}"))
            high = [r for r in sorted(by_dir["fwd"]) if r >= 0.1 and r in by_dir["bwd"]]
            asym = all(by_dir["bwd"][r] >= by_dir["fwd"][r] for r in high)
            checks.append(("bwd_loss_ge_fwd_loss", asym,
                           ", ".join(f"{r:.2f}: bwd={by_dir['bwd'][r]:.3g} fwd={by_dir['fwd'][r]:.3g}" for r in high)))
        elif kind == MIXED:
            rss = {k.split("/")[1]: v for k, v in mean_by_point(rows, "rss").items()}
            ok = rss["delay_loss"] >= 1.05 * rss["delay"] and rss["delay"] > 1.05 * rss["clean"]
            checks.append(("rss_delay_loss_gt_delay_gt_clean", ok, _fmt(rss)))
        elif kind == SINE_COMPARE:
            rss = mean_by_point(rows, "rss")
            sat = mean_by_point(rows, "saturation")
            delayed = sorted({k.rsplit("/", 1)[0] for k in rss if not k.startswith("0.0/0.0")})
            for d in delayed:
                mpc, pid = rss[f"{d}/mpc"], rss[f"{d}/pid"]
                checks.append((f"mpc_beats_pid_at_{d}", mpc < pid, f"mpc={mpc:.4g} pid={pid:.4g}"))
            checks.append(("no_state_bound_saturation", all(v <= 0.01 for v in sat.values()), _fmt(sat)))
        elif kind == MULTI_STEP:
            for metric in ("overshoot", "rise_delay"):
                m = {float(k): v for k, v in mean_by_point(rows, metric).items()}
                values = [m[s] for s in sorted(m)]
                # A response that never reaches the target is a failure, not a trend
                finite = bool(values) and all(math.isfinite(v) for v in values)
                violations, worst = _non_decreasing(values)
                checks.append((f"{metric}_non_decreasing_in_step", finite and violations == 0, _fmt(m)))
    except (KeyError, ValueError) as e:
        checks.append((f"{kind}_complete", False, f"missing result: {e}"))
    return checks


def _fmt(values: Dict) -> str:
    return ", ".join(f"{k}={v:.4g}" for k, v in sorted(values.items(), key=lambda kv: str(kv[0])))


_PLOT_AXES = {
    HORIZON_SWEEP: ("horizon", "ise", None, "Prediction horizon N", "ISE"),
    MULTI_STEP: ("step", "overshoot", None, "Step size (rad)", "Overshoot (rad)"),
    SINE_COMPARE: ("bwd_delay_ms", "rss", "controller", "Delay each way (ms)", "RSS"),
    DELAY_SPLIT: ("fwd_delay_ms", "rss", None, "Forward share of RTT (ms)", "RSS"),
    LOSS_SWEEP: ("loss", "rss", "direction", "Loss rate", "RSS"),
    MIXED: ("point", "rss", None, "Impairment", "RSS"),
}

_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""
Plot {kind} results from {summary}

Usage:
    python {script} [summary.csv] [output.png]
"""

import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

X, Y, GROUP = {x!r}, {y!r}, {group!r}


def load(path):
    with open(path) as f:
        return [r for r in csv.DictReader(f) if r["status"] == "ok"]


def x_value(row):
    if X == "loss":
        return float(row["fwd_loss"]) + float(row["bwd_loss"])
    return row[X]


def group_of(row):
    if GROUP == "direction":
        return "fwd" if float(row["fwd_loss"]) > 0 or row["point"].startswith("fwd") else "bwd"
    return row[GROUP] if GROUP else ""


def main():
    summary = sys.argv[1] if len(sys.argv) > 1 else {summary!r}
    output = sys.argv[2] if len(sys.argv) > 2 else "{kind}.png"
    series = defaultdict(lambda: defaultdict(list))
    for row in load(summary):
        series[group_of(row)][x_value(row)].append(float(row[Y]))

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, points in sorted(series.items()):
        xs = list(points)
        try:
            xs.sort(key=float)
            xv = [float(x) for x in xs]
        except ValueError:
            xv = xs
        ax.plot(xv, [sum(points[x]) / len(points[x]) for x in xs], marker="o", label=name or None)
    ax.set_xlabel({xlabel!r})
    ax.set_ylabel({ylabel!r})
    ax.grid(True, alpha=0.3)
    if any(series):
        ax.legend()
    fig.tight_layout()
    fig.savefig(output, dpi=150)
    print(f"saved {{output}}")


if __name__ == "__main__":
    main()
'''


def write_plot_script(kind: str, summary_name: str, path: str) -> str:
    """Write a matplotlib script that redraws this experiment from its summary CSV"""
    x, y, group, xlabel, ylabel = _PLOT_AXES[kind]
    text = _PLOT_TEMPLATE.format(kind=kind, summary=summary_name, script=os.path.basename(path),
                                 x=x, y=y, group=group, xlabel=xlabel, ylabel=ylabel)
    with open(path, "w") as f:
        f.write(text)
    return path


def compare_controllers(base: ScenarioConfig, out_dir: Optional[str] = None) -> Tuple[MetricReport, MetricReport]:
    """
    Run MPC and PID on identical seeds, channels and references

    Both are scored against the reference signal, since their delay-free
    trajectories differ.
    """
    reports = []
    for kind in ("mpc", "pid"):
        cfg = replace(base, controller_kind=kind)
        result = run_scenario(cfg)
        report = metric_report(result, None, joints=metric_joints(cfg),
                               metadata={"controller": kind,
                                         "saturation": saturation_fraction(result, cfg.plant_config())})
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            write_trace_csv(result, os.path.join(out_dir, f"compare_{kind}.csv"))
            with open(os.path.join(out_dir, f"compare_{kind}.json"), "w") as f:
                f.write(report.to_json())
        reports.append(report)
    logger.info(f"compare: RSS mpc={reports[0].rss:.6g} pid={reports[1].rss:.6g}")
    return reports[0], reports[1]


def experiment_from_dict(data: Dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("experiment: expected an object")
    data = dict(data)
    known = {"kind", "base", "grid", "repetitions", "name", "total_rtt", "delay", "loss", "ideal"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"experiment: unknown key(s) {', '.join(unknown)}")
    if "kind" not in data:
        raise ConfigError("experiment: 'kind' is required")
    base = scenario_from_dict(data.pop("base", {}))
    grid = tuple(tuple(v) if isinstance(v, list) else v for v in data.pop("grid", []))
    try:
        return ExperimentSpec(base=base, grid=grid, **data)
    except TypeError as e:
        raise ConfigError(f"experiment: {e}")


def load_experiment(path: str) -> ExperimentSpec:
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read experiment {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"experiment is not valid JSON: {e}")
    return experiment_from_dict(data)


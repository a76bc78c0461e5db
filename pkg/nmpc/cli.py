"""
Command-line entry point for the networked MPC lab

Subcommands: run, sweep, compare, serve, plant, proxy, metrics.
Exit codes: 0 success, 1 other error, 2 invalid configuration,
3 experiment finished with failed points, 130 interrupted.
"""

import argparse
import logging
import os
import threading
from dataclasses import replace
from datetime import datetime
from typing import List, Optional, Tuple

from nmpc import settings
from nmpc.dynamics import InvalidArgumentError
from nmpc.experiments import compare_controllers, load_experiment, run_experiment
from nmpc.metrics import metric_report
from nmpc.netsim import ChannelConfig
from nmpc.scenario import ConfigError, ScenarioConfig, load_scenario, scenario_hash
from nmpc.simloop import ideal_scenario, log_summary, read_trace_csv, run_scenario, write_trace_csv
from nmpc.transport import EndpointConfig, run_controller_server, run_impairment_proxy, run_plant_client

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_INTERRUPTED = 130


def parse_address(text: str) -> Tuple[str, int]:
    """host:port (host defaults to 127.0.0.1)"""
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = "", text
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")


def _scenario(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig(Ts=settings.SAMPLE_PERIOD)
    if getattr(args, "duration", None):
        cfg = replace(cfg, duration=args.duration)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _stamp(cfg: ScenarioConfig) -> str:
    return f"{datetime.now().strftime('%Y%m%d_%H%M%S')}_{scenario_hash(cfg)[:8]}"


def cmd_run(args) -> int:
    cfg = _scenario(args)
    os.makedirs(args.out, exist_ok=True)
    result = run_scenario(cfg)
    ideal = run_scenario(ideal_scenario(cfg))
    report = metric_report(result, ideal.angles(), joints=cfg.reference_joints)
    stamp = _stamp(cfg)
    write_trace_csv(result, os.path.join(args.out, f"trace_{stamp}.csv"))
    report_path = os.path.join(args.out, f"metrics_{stamp}.json")
    with open(report_path, "w") as f:
        f.write(report.to_json())
    log_summary(result, args.scenario or "default scenario")
    logger.info(f"ISE={report.ise:.6g} RSS={report.rss:.6g}  metrics saved to: {report_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = load_experiment(args.experiment)
    out = os.path.join(args.out, f"{spec.label}_{_stamp(spec.base)}")
    result = run_experiment(spec, out_dir=out, workers=args.workers)
    return EXIT_PARTIAL if result.failed else EXIT_OK


def cmd_compare(args) -> int:
    cfg = _scenario(args)
    mpc, pid = compare_controllers(cfg, out_dir=os.path.join(args.out, f"compare_{_stamp(cfg)}"))
    logger.info("=" * 80)
    logger.info("CONTROLLER COMPARISON")
    logger.info("=" * 80)
    for name, r in (("mpc", mpc), ("pid", pid)):
        logger.info(f"  {name:<4} ISE={r.ise:.6g} RSS={r.rss:.6g} saturation={r.metadata['saturation']:.2%}")
    logger.info("=" * 80)
    return EXIT_OK


def _stop_after(seconds: Optional[float]) -> threading.Event:
    stop = threading.Event()
    if seconds:
        timer = threading.Timer(seconds, stop.set)
        timer.daemon = True
        timer.start()
    return stop


def cmd_serve(args) -> int:
    cfg = _scenario(args)
    endpoint = EndpointConfig(bind=args.bind, peer=args.peer, rate_hz=args.rate_hz,
                              role="controller", clock=args.clock, idle_timeout=args.idle_timeout)
    run_controller_server(cfg, endpoint, stop=_stop_after(args.serve_for))
    return EXIT_OK


def cmd_plant(args) -> int:
    cfg = _scenario(args)
    if args.peer is None:
        raise ConfigError("plant needs --peer")
    endpoint = EndpointConfig(bind=args.bind, peer=args.peer, rate_hz=args.rate_hz,
                              role="plant", clock=args.clock)
    result = run_plant_client(cfg, endpoint)
    os.makedirs(args.out, exist_ok=True)
    write_trace_csv(result, os.path.join(args.out, f"plant_trace_{_stamp(cfg)}.csv"))
    log_summary(result, "plant client")
    return EXIT_OK


def cmd_proxy(args) -> int:
    try:
        fwd = ChannelConfig(base_delay=args.fwd_delay_ms / 1000.0, jitter=args.jitter_ms / 1000.0,
                            loss_rate=args.fwd_loss, seed=args.seed)
        bwd = ChannelConfig(base_delay=args.bwd_delay_ms / 1000.0, jitter=args.jitter_ms / 1000.0,
                            loss_rate=args.bwd_loss, seed=args.seed + 1)
    except InvalidArgumentError as e:
        raise ConfigError(str(e))
    run_impairment_proxy(args.listen, args.forward_to, fwd, bwd,
                         stop=_stop_after(args.serve_for), clock_kind=args.clock)
    return EXIT_OK


def cmd_metrics(args) -> int:
    trace = read_trace_csv(args.trace)
    ideal = read_trace_csv(args.ideal).angles() if args.ideal else None
    report = metric_report(trace, ideal, joints=args.joints,
                           metadata={"trace": os.path.basename(args.trace)})
    print(report.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmpc_lab.py",
        description="Networked MPC laboratory: simulate, sweep and run over UDP",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # One closed-loop run (trace CSV + metrics JSON)
  python nmpc_lab.py run --scenario configs/step_delay.json

  # Experiment sweep with a process pool
  python nmpc_lab.py sweep --experiment configs/delay_split.json --workers 4

  # MPC versus PID on the same scenario
  python nmpc_lab.py compare --scenario configs/sine_delay.json

  # Socket mode: server, proxy and plant in three shells
  python nmpc_lab.py serve --bind 127.0.0.1:9000 --scenario configs/step.json
  python nmpc_lab.py proxy --listen 127.0.0.1:9100 --forward-to 127.0.0.1:9000 \\
      --fwd-delay-ms 50 --bwd-delay-ms 50
  python nmpc_lab.py plant --peer 127.0.0.1:9100 --scenario configs/step.json

  # Recompute metrics of a saved trace
  python nmpc_lab.py metrics --trace trace.csv --ideal ideal.csv
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", help="Scenario JSON file (default: built-in defaults)")
            p.add_argument("--duration", type=float, help="Override the scenario duration (s)")
            p.add_argument("--seed", type=int, help="Override the scenario seed")
        p.add_argument("--out", default=settings.OUTPUT_DIR,
                       help=f"Output directory (default: {settings.OUTPUT_DIR})")

    p = sub.add_parser("run", help="Run one scenario in simulation")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Run an experiment grid")
    p.add_argument("--experiment", required=True, help="Experiment JSON file")
    p.add_argument("--workers", type=int, default=settings.WORKERS,
                   help=f"Process pool size (default: {settings.WORKERS})")
    common(p, scenario=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="Compare MPC and PID on one scenario")
    common(p)
    p.set_defaults(func=cmd_compare)

    def socket_args(p):
        p.add_argument("--bind", type=parse_address, default=("127.0.0.1", 0), help="Local host:port")
        p.add_argument("--peer", type=parse_address, help="Remote host:port")
        p.add_argument("--rate-hz", type=float, default=100.0, help="STATE send frequency (default: 100)")
        p.add_argument("--clock", choices=["monotonic", "realtime"], default="monotonic",
                       help="Timestamp clock; realtime needs synchronized hosts")

    p = sub.add_parser("serve", help="Controller server over UDP")
    common(p)
    socket_args(p)
    p.add_argument("--serve-for", type=float, help="Stop after this many seconds")
    p.add_argument("--idle-timeout", type=float, help="Stop after this many idle seconds")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("plant", help="Plant client over UDP")
    common(p)
    socket_args(p)
    p.set_defaults(func=cmd_plant)

    p = sub.add_parser("proxy", help="Impairment proxy between plant and server")
    p.add_argument("--listen", type=parse_address, required=True, help="host:port the plant sends to")
    p.add_argument("--forward-to", type=parse_address, required=True, help="Controller server host:port")
    p.add_argument("--fwd-delay-ms", type=float, default=0.0, help="Controller-to-plant delay")
    p.add_argument("--bwd-delay-ms", type=float, default=0.0, help="Plant-to-controller delay")
    p.add_argument("--fwd-loss", type=float, default=0.0, help="Controller-to-plant loss rate")
    p.add_argument("--bwd-loss", type=float, default=0.0, help="Plant-to-controller loss rate")
    p.add_argument("--jitter-ms", type=float, default=0.0, help="Uniform jitter half-width, both directions")
    p.add_argument("--seed", type=int, default=0, help="Random seed")
    p.add_argument("--serve-for", type=float, help="Stop after this many seconds")
    p.add_argument("--clock", choices=["monotonic", "realtime"], default="monotonic")
    p.set_defaults(func=cmd_proxy)

    p = sub.add_parser("metrics", help="Recompute ISE/RSS from trace CSVs")
    p.add_argument("--trace", required=True, help="Trace CSV")
    p.add_argument("--ideal", help="Ideal trace CSV (default: the trace's reference angles)")
    p.add_argument("--joints", type=int, nargs="+", help="Joint indices to score")
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging()
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED
    except Exception as e:
        logger.error(f"Error: {e}", exc_info=True)
        return EXIT_ERROR

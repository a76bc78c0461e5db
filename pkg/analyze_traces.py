#!/usr/bin/env python3
"""
Analyze closed-loop trace CSV files

Usage:
    python analyze_traces.py nmpc_results/trace_*.csv
    python analyze_traces.py --ideal ideal.csv trace.csv
    python analyze_traces.py --compare run1.csv run2.csv
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from nmpc.metrics import ise_per_joint, rss_per_joint
from nmpc.simloop import RunResult, read_trace_csv


def analyze_trace(result: RunResult, ideal: Optional[RunResult] = None) -> Dict:
    """Per-joint ISE/RSS plus control-path statistics of one trace"""
    ise_j = ise_per_joint(result)
    ideal_angles = ideal.angles() if ideal is not None else result.reference_angles()
    rss_j = rss_per_joint(result, ideal_angles)
    hits = np.array([r.actuator_hit for r in result.records])
    index = np.array([r.control_index for r in result.records])
    rtts = result.rtt_samples()
    return {
        'ticks': len(result.records),
        'duration_s': result.records[-1].time if result.records else 0.0,
        'ise': float(np.mean(ise_j)),
        'rss': float(np.mean(rss_j)),
        'rss_against': 'ideal trace' if ideal is not None else 'reference',
        'ise_per_joint': [float(v) for v in ise_j],
        'rss_per_joint': [float(v) for v in rss_j],
        'hold_fraction': float(np.mean(~hits)) if hits.size else 0.0,
        'mean_horizon_index': float(np.mean(index[index >= 0])) if np.any(index >= 0) else None,
        'rtt_mean_ms': float(np.mean(rtts) * 1000) if rtts.size else None,
        'rtt_max_ms': float(np.max(rtts) * 1000) if rtts.size else None,
    }


def print_summary(stats: Dict, csv_path: str):
    """Print detailed summary of one trace"""
    print("=" * 80)
    print(f"Analysis of: {csv_path}")
    print("=" * 80)

    if stats['ticks'] == 0:
        print("No trace records found!")
        return

    print(f"\nTicks: {stats['ticks']}  ({stats['duration_s']:.2f}s)")
    print(f"ISE: {stats['ise']:.6g}")
    print(f"RSS: {stats['rss']:.6g}  (against {stats['rss_against']})")
    print(f"Ticks holding without a packet: {stats['hold_fraction']:.1%}")
    if stats['mean_horizon_index'] is not None:
        print(f"Mean horizon index applied: {stats['mean_horizon_index']:.2f}")
    if stats['rtt_mean_ms'] is not None:
        print(f"RTT: mean {stats['rtt_mean_ms']:.2f}ms, max {stats['rtt_max_ms']:.2f}ms")

    print("\n" + "=" * 80)
    print("PER JOINT")
    print("=" * 80)
    for j, (e, r) in enumerate(zip(stats['ise_per_joint'], stats['rss_per_joint'])):
        print(f"  joint {j}: ISE {e:>14.6g}   RSS {r:>14.6g}")
    print("\n" + "=" * 80)


def compare_traces(csv_paths: List[str], ideal: Optional[RunResult]):
    """Compare several runs side by side"""
    print("=" * 80)
    print("COMPARING MULTIPLE RUNS")
    print("=" * 80)
    print(f"\n  {'trace':<40} {'ISE':>12} {'RSS':>12} {'hold':>8}")
    print("-" * 76)
    for path in csv_paths:
        stats = analyze_trace(read_trace_csv(path), ideal)
        print(f"  {Path(path).name:<40} {stats['ise']:>12.6g} {stats['rss']:>12.6g} {stats['hold_fraction']:>8.1%}")
    print("\n" + "=" * 80)


def export_to_json(stats: Dict, output_path: str):
    with open(output_path, 'w') as f:
        json.dump(stats, f, indent=2)
    print(f"Exported to {output_path}")


def main():
    parser = argparse.ArgumentParser(
        description='Analyze closed-loop trace CSV files',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Analyze single run against its reference
  python analyze_traces.py nmpc_results/trace_20250101_120000_ab12cd34.csv

  # RSS against a delay-free run of the same scenario
  python analyze_traces.py --ideal ideal.csv trace.csv

  # Compare multiple runs
  python analyze_traces.py --compare run1.csv run2.csv run3.csv

  # Export to JSON
  python analyze_traces.py --export stats.json trace.csv
        """
    )

    parser.add_argument(
        'csv_files',
        nargs='+',
        help='One or more trace CSV files to analyze'
    )

    parser.add_argument(
        '--ideal',
        help='Ideal trace CSV for RSS (default: reference angles)'
    )

    parser.add_argument(
        '--compare',
        action='store_true',
        help='Compare multiple runs'
    )

    parser.add_argument(
        '--export',
        metavar='JSON_FILE',
        help='Export results to JSON file'
    )

    args = parser.parse_args()

    for csv_file in args.csv_files + ([args.ideal] if args.ideal else []):
        if not Path(csv_file).exists():
            print(f"Error: File not found: {csv_file}", file=sys.stderr)
            return 1

    try:
        ideal = read_trace_csv(args.ideal) if args.ideal else None
        if args.compare and len(args.csv_files) > 1:
            compare_traces(args.csv_files, ideal)
        else:
            stats = analyze_trace(read_trace_csv(args.csv_files[0]), ideal)
            print_summary(stats, args.csv_files[0])

            if args.export:
                export_to_json(stats, args.export)

        return 0

    except Exception as e:
        print(f"Error analyzing trace data: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        return 1


if __name__ == '__main__':
    sys.exit(main())

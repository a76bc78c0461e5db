#!/usr/bin/env python3
"""
Networked MPC laboratory

Closed-loop simulation of joint-space MPC over impaired channels, experiment
sweeps, and UDP client/server/proxy endpoints.

Usage:
    python nmpc_lab.py run --scenario configs/step_delay.json
    python nmpc_lab.py sweep --experiment configs/horizon_sweep.json
    python nmpc_lab.py --help
"""

import sys

from nmpc.cli import main

if __name__ == '__main__':
    sys.exit(main())

#!/usr/bin/env python3
"""Run one Monte-Carlo training preset and emit its artifacts.

Example:
    python scripts/run_preset.py --preset sec_4_4 --scale 0.1 --seed 7 \
        --out-dir out/sec_4_4
"""

import sys

from biasflow.cli import dispatch

if __name__ == "__main__":
    sys.exit(dispatch(["mc"] + sys.argv[1:]))

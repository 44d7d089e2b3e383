#!/usr/bin/env python3
"""Classify a shallow parameter file into a critical-point report row.

Thin wrapper over the ``landscape`` subcommand; see the README for the
config file layout ([problem] + [params] sections).
"""

import sys

from biasflow.cli import dispatch

if __name__ == "__main__":
    sys.exit(dispatch(["landscape"] + sys.argv[1:]))

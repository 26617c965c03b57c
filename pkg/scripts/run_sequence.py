#!/usr/bin/env python3
"""Benchmark sequence with training/reuse toggles (training/reuse comparison grid).

Writes sequence.csv plus per-geometry convergence logs into --out.
"""
import sys

from arbilomod.cli import main

if __name__ == "__main__":
    sys.exit(main(["sequence"] + sys.argv[1:]))

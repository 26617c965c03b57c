#!/usr/bin/env python3
"""Relative estimators vs true error over enrichment iterations.

Tight-tolerance variant of the sequence run with the oracle enabled; the
reference configuration is --tol 1e-6 --eps-train 1e-5 --eps-greedy 1e-7.
"""
import sys

from arbilomod.cli import main

if __name__ == "__main__":
    sys.exit(main(["estimator-performance"] + sys.argv[1:]))

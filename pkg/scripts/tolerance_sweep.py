#!/usr/bin/env python3
"""Initial reduction error over an (eps_train, eps_greedy) grid."""
import sys

from arbilomod.cli import main

if __name__ == "__main__":
    sys.exit(main(["tolerance-sweep"] + sys.argv[1:]))

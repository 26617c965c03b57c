#!/usr/bin/env python3
"""Wall times and dimensions for the initial pipeline over mesh sizes."""
import sys

from arbilomod.cli import main

if __name__ == "__main__":
    sys.exit(main(["timings"] + sys.argv[1:]))

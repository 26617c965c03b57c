#!/usr/bin/env python3
"""Influence of the domain size H at fixed mesh resolution."""
import sys

from arbilomod.cli import main

if __name__ == "__main__":
    sys.exit(main(["h-study"] + sys.argv[1:]))

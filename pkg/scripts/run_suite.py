#!/usr/bin/env python3
"""Run the full fixture-mode benchmark suite and emit report files."""

import sys

from voxplan.cli import main

if __name__ == "__main__":
    sys.exit(main(["suite", *sys.argv[1:]]))

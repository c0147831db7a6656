#!/usr/bin/env python3
"""Dump composed value maps for one task to binary + slice text files."""

import sys

from voxplan.cli import main

if __name__ == "__main__":
    sys.exit(main(["dump-maps", *sys.argv[1:]]))

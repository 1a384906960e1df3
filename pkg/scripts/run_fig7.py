"""Updater comparison on the dynamic scenario, one incoming application kind at a time.

    python3 scripts/run_fig7.py [--jobs 4] [--out-dir results]
"""
import sys

from dpsac.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep-fig7", *sys.argv[1:]]))

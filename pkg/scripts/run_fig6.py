"""Scheduler comparison across the ten congestion sets (5 seeds, MinMax-0.5).

    python3 scripts/run_fig6.py [--jobs 4] [--out-dir results]
"""
import sys

from dpsac.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep-fig6", *sys.argv[1:]]))

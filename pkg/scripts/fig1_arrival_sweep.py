"""Arrival-rate sweep: backlog, delay and stability frontier per policy.

Uses results/calibrated.yaml when present (see calibrate.py), otherwise
calibrates first. Extra arguments are PATH=VALUE overrides.
"""
import sys
from pathlib import Path

from hmsched import cli

ROOT = Path(__file__).resolve().parents[1]


def main(overrides):
    cal = ROOT / "results" / "calibrated.yaml"
    argv = ["sweep-arrival", "--config", str(cal if cal.is_file() else ROOT / "configs" / "default.yaml"),
            "--out", str(ROOT / "results" / "fig1"),
            "--set", "sweep={arrival_total: [26, 27, 28, 29, 30, 31, 32, 33]}"]
    if not cal.is_file():
        argv.append("--calibrate")
    for o in overrides:
        argv += ["--set", o]
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

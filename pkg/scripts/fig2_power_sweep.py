"""Transmit-power sweep at 28 packets/slot; minimum stabilizing power per policy."""
import sys
from pathlib import Path

from hmsched import cli

ROOT = Path(__file__).resolve().parents[1]


def main(overrides):
    cal = ROOT / "results" / "calibrated.yaml"
    argv = ["sweep-power", "--config", str(cal if cal.is_file() else ROOT / "configs" / "default.yaml"),
            "--out", str(ROOT / "results" / "fig2"),
            "--set", "sweep={power_w: [2, 3, 4, 5, 6, 7, 8, 10]}", "--set", "traffic.total_load_pkts=28"]
    if not cal.is_file():
        argv.append("--calibrate")
    for o in overrides:
        argv += ["--set", o]
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

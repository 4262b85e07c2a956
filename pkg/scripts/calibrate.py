"""Fit fading.mean_gain so MWUM saturates at 30 packets/slot; writes results/calibrated.yaml."""
import sys
from pathlib import Path

from hmsched import experiments as ex

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    cfg = ex.load_config(ROOT / "configs" / "default.yaml", sys.argv[1:])
    cfg = ex.calibrate(cfg, log=print)
    out = ROOT / "results" / "calibrated.yaml"
    ex.atomic_write(out, ex.dump_config(cfg))
    print(f"mean_gain = {cfg.fading.mean_gain:.9g} -> {out}")

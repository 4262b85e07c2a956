"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .phy import ConfigError


def _base_parser(sub, name, help_):
    p = sub.add_parser(name, help=help_)
    p.add_argument("--config", help="YAML experiment file (defaults reproduce the 20-user HDR setup)")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable); replaces config seeds")
    p.add_argument("--horizon", type=int, help="simulation length in slots")
    p.add_argument("--out", help="output directory")
    p.add_argument("--policy", help="comma-separated policy names (mwum, mwhm, mwdm, lmwdm)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                   help="override any config field, e.g. --set phy.total_power_w=4")
    p.add_argument("--calibrate", action="store_true", help="calibrate fading.mean_gain before running")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmsched", description="Max-Weight scheduling with hierarchical modulation")
    sub = ap.add_subparsers(dest="command", required=True)
    p = _base_parser(sub, "run", "simulate each (policy, seed) at the configured load")
    p.add_argument("--series-stride", type=int, default=1, help="keep every k-th slot in the series CSV")
    _base_parser(sub, "sweep-arrival", "total arrival-rate sweep (stability frontier, delay)")
    _base_parser(sub, "sweep-power", "transmit-power sweep at fixed load")
    _base_parser(sub, "calibrate", "fit fading.mean_gain so MWUM saturates at the target load")
    p = sub.add_parser("validate-power", help="closed-form power split vs. grid oracle")
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=10_000, help="oracle grid points")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative weight gap")
    p.add_argument("--spacing", choices=("log", "uniform"), default="log",
                   help="oracle grid spacing; a uniform grid cannot resolve optima near sigma/h")
    return ap


def _load(args) -> ex.ExperimentConfig:
    overrides = list(args.overrides)
    if args.horizon is not None:
        overrides.append(f"horizon_slots={args.horizon}")
    if args.out is not None:
        overrides.append(f"out_dir={json.dumps(args.out)}")
    if args.policy:
        overrides.append(f"policies=[{args.policy}]")
    if args.seed:
        overrides.append(f"seeds={json.dumps(args.seed)}")
    return ex.load_config(args.config, overrides)


def _say(args, msg):
    if not getattr(args, "quiet", False):
        print(msg, flush=True)


def _maybe_calibrate(args, cfg):
    if not args.calibrate:
        return cfg
    cfg = ex.calibrate(cfg)
    _say(args, f"calibrated fading.mean_gain = {cfg.fading.mean_gain:.9g}")
    return cfg


def cmd_run(args) -> int:
    cfg = _maybe_calibrate(args, _load(args))
    out = Path(cfg.out_dir)
    ex.atomic_write(out / "config.yaml", ex.dump_config(cfg))
    _say(args, "load_pkts  policy  seed  mean_backlog_pkts  delay_slots  verdict")
    for policy in cfg.policies:
        for seed in cfg.seeds:
            r = ex.run_point(cfg, policy, seed)
            stem = f"run_{r.policy}_seed{seed}"
            ex.atomic_write(out / f"{stem}.json", r.to_json() + "\n")
            tmp = out / f".{stem}.csv.tmp"
            r.write_series_csv(tmp, stride=max(1, args.series_stride))
            tmp.replace(out / f"{stem}.csv")
            delay = "n/a" if r.delay_slots is None else f"{r.delay_slots:.9g}"
            _say(args, f"{r.offered_load_pkts:.9g}  {r.policy}  {seed}  {r.mean_total_backlog_pkts:.9g}  {delay}  {r.verdict}")
    return 0


def _progress(args, key):
    def f(row):
        _say(args, f"{key}={row[key]:g} {row['policy']} seed={row['seed']} "
                   f"backlog={row['mean_total_backlog_pkts']:.6g} pkts {row['verdict']} slope={row['slope']:.4g}")
    return f


def cmd_sweep_arrival(args) -> int:
    cfg = _maybe_calibrate(args, _load(args))
    if not cfg.sweep or "arrival_total" not in cfg.sweep:
        cfg = replace(cfg, sweep={"arrival_total": [26, 27, 28, 29, 30, 31, 32, 33]})
    rows = ex.sweep_arrival(cfg, progress=_progress(args, "load_pkts_per_slot"))
    out = Path(cfg.out_dir)
    ex.atomic_write(out / "config.yaml", ex.dump_config(cfg))
    ex.atomic_write(out / "sweep_arrival.csv", ex.rows_to_csv(rows, ex.ARRIVAL_COLUMNS))
    summary = ex.arrival_summary(cfg, rows)
    ex.atomic_write(out / "sweep_arrival_summary.json", json.dumps(summary, indent=2) + "\n")
    for policy in cfg.policies:
        ex.atomic_write(out / f"fig1_{policy}.dat",
                        ex.plot_data(rows, "load_pkts_per_slot", ["mean_total_backlog_pkts", "delay_slots"], policy))
    for policy, f in summary["frontier_pkts_per_slot"].items():
        _say(args, f"frontier {policy}: {f} pkts/slot")
    if "mwdm_minus_mwum_mbps" in summary:
        _say(args, f"MWDM - MWUM: {summary['mwdm_minus_mwum_pkts_per_slot']:g} pkts/slot "
                   f"= {summary['mwdm_minus_mwum_mbps']:.4g} Mbit/s")
    return 0


def cmd_sweep_power(args) -> int:
    cfg = _maybe_calibrate(args, _load(args))
    if not cfg.sweep or "power_w" not in cfg.sweep:
        cfg = replace(cfg, sweep={"power_w": [2, 3, 4, 5, 6, 7, 8, 10]})
    rows = ex.sweep_power(cfg, progress=_progress(args, "power_w"))
    out = Path(cfg.out_dir)
    ex.atomic_write(out / "config.yaml", ex.dump_config(cfg))
    ex.atomic_write(out / "sweep_power.csv", ex.rows_to_csv(rows, ex.POWER_COLUMNS))
    summary = ex.power_summary(cfg, rows)
    ex.atomic_write(out / "sweep_power_summary.json", json.dumps(summary, indent=2) + "\n")
    for policy in cfg.policies:
        ex.atomic_write(out / f"fig2_{policy}.dat", ex.plot_data(rows, "power_w", ["mean_total_backlog_pkts"], policy))
    for policy, p in summary["min_stable_power_w"].items():
        _say(args, f"min stabilizing power {policy}: {p} W")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    cfg = ex.calibrate(cfg, log=None if args.quiet else print)
    out = Path(cfg.out_dir)
    ex.atomic_write(out / "calibrated.yaml", ex.dump_config(cfg))
    print(f"mean_gain = {cfg.fading.mean_gain:.9g}  (written to {out / 'calibrated.yaml'})")
    return 0


def cmd_validate_power(args) -> int:
    if args.count < 1:
        print("error: --count must be >= 1", file=sys.stderr)
        return 2
    res = ex.validate_power(args.count, args.seed, args.grid, args.tolerance, spacing=args.spacing)
    print(f"instances={res.count} seed={res.seed} grid={res.grid_points} spacing={res.spacing} tolerance={res.tolerance:g}")
    print(f"worst relative gap = {res.worst_gap:.9e}")
    print(f"worst instance: {json.dumps(res.worst_instance)}")
    for f in res.failures:
        print(f"FAIL {json.dumps(f)}")
    print("PASS" if res.passed else f"FAIL ({len(res.failures)} instances beyond tolerance)")
    return 0 if res.passed else 1


COMMANDS = {
    "run": cmd_run,
    "sweep-arrival": cmd_sweep_arrival,
    "sweep-power": cmd_sweep_power,
    "calibrate": cmd_calibrate,
    "validate-power": cmd_validate_power,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

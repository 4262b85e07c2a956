"""Experiment configuration, sweeps, calibration and the power-allocation audit."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from .channel import FadingConfig, gain_trace
from .phy import ConfigError, PhyParams, grid_power_oracle, optimal_power_split
from .schedulers import policy_code
from .sim import SimConfig, SimReport, TrafficConfig, arrival_uniforms, arrivals_from_uniforms, simulate


@dataclass(frozen=True)
class FadingSpec:
    doppler_range_hz: tuple = (5.0, 15.0)
    n_oscillators: int = 16
    # geometric mean of the per-user mean gains
    mean_gain: float = 1e-3
    # per-user mean gains are log-spaced over this many dB (0 = identical users)
    gain_spread_db: float = 10.0

    def __post_init__(self):
        if not self.mean_gain > 0:
            raise ConfigError(f"fading.mean_gain must be positive, got {self.mean_gain!r}")
        if not self.gain_spread_db >= 0:
            raise ConfigError(f"fading.gain_spread_db must be >= 0, got {self.gain_spread_db!r}")

    def user_gains(self, n_users: int) -> np.ndarray:
        offsets_db = np.linspace(-self.gain_spread_db / 2, self.gain_spread_db / 2, n_users)
        return self.mean_gain * 10.0 ** (offsets_db / 10.0)

    def config(self, n_users: int, slot_duration_s: float, seed: int) -> FadingConfig:
        return FadingConfig(
            n_users=n_users,
            slot_duration_s=slot_duration_s,
            doppler_range_hz=tuple(self.doppler_range_hz),
            mean_gain=tuple(self.user_gains(n_users).tolist()),
            n_oscillators=self.n_oscillators,
            master_seed=seed,
        )


@dataclass(frozen=True)
class TrafficSpec:
    total_load_pkts: float = 28.0
    batch_size_pkts: int = 4
    packet_bits: int = 1024

    def config(self, n_users: int, total: Optional[float] = None) -> TrafficConfig:
        load = self.total_load_pkts if total is None else total
        return TrafficConfig.uniform(load, n_users, self.batch_size_pkts, self.packet_bits)


@dataclass(frozen=True)
class CalibrationSpec:
    target_pkts: float = 30.0
    overload_pkts: float = 60.0
    horizon_slots: int = 50_000
    seeds: tuple = (0, 1)
    gain_bounds: tuple = (1e-5, 1e-1)
    iterations: int = 16


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "default"
    n_users: int = 20
    phy: PhyParams = field(default_factory=PhyParams)
    fading: FadingSpec = field(default_factory=FadingSpec)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    policies: tuple = ("mwum", "lmwdm", "mwdm")
    sweep: Optional[dict] = None  # {"arrival_total": [...]} or {"power_w": [...]}
    horizon_slots: int = 200_000
    warmup_slots: Optional[int] = None
    seeds: tuple = (0, 1, 2)
    out_dir: str = "results"
    stable_slope: float = 0.01
    unstable_slope: float = 0.02
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)

    def __post_init__(self):
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if not self.policies:
            raise ConfigError("policies must be nonempty")
        for p in self.policies:
            try:
                policy_code(p)
            except ValueError as e:
                raise ConfigError(f"policies: {e}") from None
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.sweep is not None:
            if len(self.sweep) != 1 or next(iter(self.sweep)) not in ("arrival_total", "power_w"):
                raise ConfigError("sweep must have exactly one axis: arrival_total or power_w")
            axis = list(next(iter(self.sweep.values())))
            if not axis or any(b <= a for a, b in zip(axis, axis[1:])):
                raise ConfigError("sweep values must be nonempty and strictly increasing")
        self.sim_config("mwum", 0)  # validates horizon/warmup/thresholds

    def sim_config(self, policy: str, seed: int, load: Optional[float] = None,
                   power_w: Optional[float] = None) -> SimConfig:
        phy = self.phy if power_w is None else replace(self.phy, total_power_w=float(power_w))
        return SimConfig(
            fading=self.fading.config(self.n_users, phy.slot_duration_s, seed),
            traffic=self.traffic.config(self.n_users, load),
            phy=phy,
            policy=policy,
            horizon_slots=self.horizon_slots,
            warmup_slots=self.warmup_slots,
            seed=seed,
            stable_slope=self.stable_slope,
            unstable_slope=self.unstable_slope,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policies"] = list(self.policies)
        d["seeds"] = list(self.seeds)
        d["fading"]["doppler_range_hz"] = list(self.fading.doppler_range_hz)
        d["calibration"]["seeds"] = list(self.calibration.seeds)
        d["calibration"]["gain_bounds"] = list(self.calibration.gain_bounds)
        return d


_NESTED = {"phy": PhyParams, "fading": FadingSpec, "traffic": TrafficSpec, "calibration": CalibrationSpec}
_TUPLES = {"policies", "seeds", "doppler_range_hz", "gain_bounds"}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown field(s) {', '.join((where + '.' if where else '') + u for u in unknown)}")
    kw = {}
    for k, v in data.items():
        path = f"{where}.{k}" if where else k
        if cls is ExperimentConfig and k in _NESTED:
            v = _build(_NESTED[k], v or {}, path)
        elif k in _TUPLES and v is not None:
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except ConfigError as e:
        raise ConfigError(f"{where + ': ' if where else ''}{e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "")


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides (values parsed as YAML scalars/lists)."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        key, raw = item.split("=", 1)
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p} is not a mapping")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a YAML experiment file; missing keys take the built-in defaults."""
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
            raise ConfigError(f"{path}: cannot parse config{where}: {getattr(e, 'problem', e)}") from None
    return config_from_dict(apply_overrides(data, overrides))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# traces (shared across policies and sweep points: paired seeds)


@lru_cache(maxsize=8)
def _unit_gains(n_users, slot_duration_s, doppler, n_osc, seed, n_slots):
    cfg = FadingConfig(n_users=n_users, slot_duration_s=slot_duration_s, doppler_range_hz=doppler,
                       mean_gain=1.0, n_oscillators=n_osc, master_seed=seed)
    g = gain_trace(cfg, n_slots)
    g.flags.writeable = False
    return g


@lru_cache(maxsize=8)
def _uniforms(seed, n_users, n_slots):
    u = arrival_uniforms(seed, n_users, n_slots)
    u.flags.writeable = False
    return u


def traces(cfg: ExperimentConfig, seed: int, n_slots: Optional[int] = None):
    """Gain trace and arrival uniforms for one seed (cached per process)."""
    n_slots = cfg.horizon_slots if n_slots is None else n_slots
    unit = _unit_gains(cfg.n_users, cfg.phy.slot_duration_s, tuple(cfg.fading.doppler_range_hz),
                       cfg.fading.n_oscillators, seed, n_slots)
    return unit * cfg.fading.user_gains(cfg.n_users), _uniforms(seed, cfg.n_users, n_slots)


def run_point(cfg: ExperimentConfig, policy: str, seed: int, load=None, power_w=None) -> SimReport:
    sc = cfg.sim_config(policy, seed, load, power_w)
    gains, u = traces(cfg, seed)
    return simulate(sc, gains, arrivals_from_uniforms(sc.traffic, u))


# ---------------------------------------------------------------------------
# calibration


def saturation_throughput(cfg: ExperimentConfig, policy: str = "mwum", mean_gain: Optional[float] = None) -> float:
    """Mean served packets/slot under heavy symmetric overload, averaged over calibration seeds."""
    cal = cfg.calibration
    c = cfg if mean_gain is None else replace(cfg, fading=replace(cfg.fading, mean_gain=mean_gain))
    c = replace(c, horizon_slots=cal.horizon_slots, warmup_slots=0)
    out = []
    for seed in cal.seeds:
        sc = c.sim_config(policy, seed, load=min(cal.overload_pkts, cfg.n_users * cfg.traffic.batch_size_pkts))
        gains, u = traces(c, seed)
        r = simulate(sc, gains, arrivals_from_uniforms(sc.traffic, u))
        out.append(sum(r.cum_departures_bits) / cal.horizon_slots / sc.traffic.packet_bits)
    return float(np.mean(out))


def calibrate(cfg: ExperimentConfig, log=None) -> ExperimentConfig:
    """Bisect the (geometric-mean) gain so MWUM saturates at the target load."""
    cal = cfg.calibration
    lo, hi = cal.gain_bounds
    if saturation_throughput(cfg, "mwum", lo) > cal.target_pkts or saturation_throughput(cfg, "mwum", hi) < cal.target_pkts:
        raise ConfigError(f"calibration target {cal.target_pkts} pkts/slot not bracketed by gain_bounds {cal.gain_bounds}")
    for _ in range(cal.iterations):
        mid = math.sqrt(lo * hi)
        thr = saturation_throughput(cfg, "mwum", mid)
        if log:
            log(f"calibrate: mean_gain={mid:.9g} mwum saturation={thr:.6f} pkts/slot")
        if thr < cal.target_pkts:
            lo = mid
        else:
            hi = mid
    g = float(f"{math.sqrt(lo * hi):.6g}")
    return replace(cfg, fading=replace(cfg.fading, mean_gain=g))


# ---------------------------------------------------------------------------
# sweeps


ARRIVAL_COLUMNS = ["load_pkts_per_slot", "policy", "seed", "mean_total_backlog_pkts", "delay_slots", "verdict", "slope"]
POWER_COLUMNS = ["power_w", "policy", "seed", "mean_total_backlog_pkts", "verdict"]


def _num(x) -> str:
    return "" if x is None else f"{x:.12g}"


def sweep_arrival(cfg: ExperimentConfig, loads=None, progress=None) -> list:
    loads = list(loads if loads is not None else (cfg.sweep or {}).get("arrival_total", []))
    if not loads:
        raise ConfigError("sweep-arrival needs sweep.arrival_total")
    rows = []
    for load in loads:
        for policy in cfg.policies:
            for seed in cfg.seeds:
                r = run_point(cfg, policy, seed, load=load)
                rows.append({"load_pkts_per_slot": float(load), "policy": r.policy, "seed": seed,
                             "mean_total_backlog_pkts": r.mean_total_backlog_pkts, "delay_slots": r.delay_slots,
                             "verdict": r.verdict, "slope": r.slope})
                if progress:
                    progress(rows[-1])
    return rows


def sweep_power(cfg: ExperimentConfig, powers=None, progress=None) -> list:
    powers = list(powers if powers is not None else (cfg.sweep or {}).get("power_w", []))
    if not powers:
        raise ConfigError("sweep-power needs sweep.power_w")
    rows = []
    for p in powers:
        for policy in cfg.policies:
            for seed in cfg.seeds:
                r = run_point(cfg, policy, seed, power_w=p)
                rows.append({"power_w": float(p), "policy": r.policy, "seed": seed,
                             "mean_total_backlog_pkts": r.mean_total_backlog_pkts, "verdict": r.verdict,
                             "slope": r.slope, "delay_slots": r.delay_slots})
                if progress:
                    progress(rows[-1])
    return rows


def _by(rows, key, policy):
    out = {}
    for r in rows:
        if r["policy"] == policy:
            out.setdefault(r[key], []).append(r)
    return dict(sorted(out.items()))


def stable_everywhere(group) -> bool:
    return all(r["verdict"] == "stable" for r in group)


def arrival_frontier(rows, policy) -> Optional[float]:
    """Largest load such that every seed is stable there and at every lower load."""
    best = None
    for load, group in _by(rows, "load_pkts_per_slot", policy).items():
        if not stable_everywhere(group):
            break
        best = load
    return best


def min_stable_power(rows, policy) -> Optional[float]:
    """Smallest power such that every seed is stable there and at every higher power."""
    best = None
    for p, group in reversed(list(_by(rows, "power_w", policy).items())):
        if not stable_everywhere(group):
            break
        best = p
    return best


def _agg(vals):
    vals = [v for v in vals if v is not None]
    if not vals:
        return {"mean": None, "min": None, "max": None}
    return {"mean": float(np.mean(vals)), "min": float(min(vals)), "max": float(max(vals))}


def arrival_summary(cfg: ExperimentConfig, rows) -> dict:
    out = {"scenario": cfg.scenario, "mean_gain": cfg.fading.mean_gain, "gain_spread_db": cfg.fading.gain_spread_db,
           "frontier_pkts_per_slot": {}, "points": {}}
    for policy in cfg.policies:
        out["frontier_pkts_per_slot"][policy] = arrival_frontier(rows, policy)
        out["points"][policy] = [
            {"load_pkts_per_slot": load,
             "mean_total_backlog_pkts": _agg([r["mean_total_backlog_pkts"] for r in g]),
             "delay_slots": _agg([r["delay_slots"] for r in g]),
             "verdicts": [r["verdict"] for r in g]}
            for load, g in _by(rows, "load_pkts_per_slot", policy).items()
        ]
    fr = out["frontier_pkts_per_slot"]
    if fr.get("mwdm") is not None and fr.get("mwum") is not None:
        gain = fr["mwdm"] - fr["mwum"]
        out["mwdm_minus_mwum_pkts_per_slot"] = gain
        # packets/slot -> Mbit/s with the configured packet size and slot length
        out["mwdm_minus_mwum_mbps"] = gain * cfg.traffic.packet_bits / cfg.phy.slot_duration_s / 1e6
    return out


def power_summary(cfg: ExperimentConfig, rows) -> dict:
    out = {"scenario": cfg.scenario, "mean_gain": cfg.fading.mean_gain, "gain_spread_db": cfg.fading.gain_spread_db,
           "load_pkts_per_slot": cfg.traffic.total_load_pkts, "min_stable_power_w": {}, "points": {}}
    for policy in cfg.policies:
        out["min_stable_power_w"][policy] = min_stable_power(rows, policy)
        out["points"][policy] = [
            {"power_w": p, "mean_total_backlog_pkts": _agg([r["mean_total_backlog_pkts"] for r in g]),
             "verdicts": [r["verdict"] for r in g]}
            for p, g in _by(rows, "power_w", policy).items()
        ]
    return out


# ---------------------------------------------------------------------------
# output


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in sorted(rows, key=lambda r: (r[columns[0]], r["policy"], r["seed"])):
        w.writerow([_num(r[c]) if isinstance(r[c], float) or r[c] is None else r[c] for c in columns])
    return buf.getvalue()


def read_rows(path) -> list:
    """Parse a sweep CSV back into typed rows."""
    out = []
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            row = {}
            for k, v in r.items():
                if k in ("policy", "verdict"):
                    row[k] = v
                elif k == "seed":
                    row[k] = int(v)
                else:
                    row[k] = None if v == "" else float(v)
            out.append(row)
    return out


def plot_data(rows, key, columns, policy) -> str:
    """Whitespace-separated numeric columns averaged over seeds: key, then ``columns``."""
    lines = ["# " + " ".join([key] + columns)]
    for x, g in _by(rows, key, policy).items():
        vals = [_agg([r[c] for r in g])["mean"] for c in columns]
        lines.append(" ".join([_num(x)] + ["nan" if v is None else _num(v) for v in vals]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# power-allocation audit


@dataclass
class ValidationResult:
    count: int
    seed: int
    grid_points: int
    spacing: str
    tolerance: float
    worst_gap: float
    worst_instance: dict
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures


def random_instances(count: int, seed: int):
    """Log-uniform gains in [1e-6, 1e-1], queues uniform in [0, 1e6] bits; channel-ordered."""
    rng = np.random.default_rng(seed)
    h = 10.0 ** rng.uniform(-6, -1, size=(count, 2))
    q = rng.uniform(0, 1e6, size=(count, 2))
    h.sort(axis=1)
    return q, h


def validate_power(count: int, seed: int = 0, grid_points: int = 10_000, tolerance: float = 1e-4,
                   params: Optional[PhyParams] = None, spacing: str = "uniform",
                   solver: Callable = optimal_power_split) -> ValidationResult:
    """Closed-form split vs. grid oracle on random instances (uncapped rates)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    params = (params or PhyParams()).uncapped()
    q, h = random_instances(count, seed)
    worst, worst_inst, failures = -1.0, {}, []
    for k in range(count):
        args = (float(q[k, 0]), float(q[k, 1]), float(h[k, 0]), float(h[k, 1]))
        closed = solver(*args, params)
        grid = grid_power_oracle(*args, params, grid_points, spacing)
        gap = abs(closed.weight - grid.weight) / max(grid.weight, 1.0)
        inst = {"index": k, "q_n": args[0], "q_m": args[1], "h_n": args[2], "h_m": args[3],
                "closed_weight": closed.weight, "grid_weight": grid.weight, "gap": gap}
        if gap > worst:
            worst, worst_inst = gap, inst
        if gap > tolerance:
            failures.append(inst)
    return ValidationResult(count, seed, grid_points, spacing, tolerance, worst, worst_inst, failures)

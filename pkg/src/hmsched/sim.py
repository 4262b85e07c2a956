"""Slot loop: channel -> decision -> arrivals -> queue update, plus metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .channel import FadingConfig, gain_trace, user_rng
from .phy import ConfigError, PhyParams
from .schedulers import POLICY_NAMES, ScheduleDecision, decide_kernel, policy_code

ARRIVAL_STREAM = 1


@dataclass(frozen=True)
class TrafficConfig:
    per_user_mean_pkts: tuple
    batch_size_pkts: int = 4
    packet_bits: int = 1024

    def __post_init__(self):
        lam = np.asarray(self.per_user_mean_pkts, dtype=float)
        if self.batch_size_pkts < 1 or self.packet_bits < 1:
            raise ConfigError("batch_size_pkts and packet_bits must be positive integers")
        if lam.ndim != 1 or np.any(lam < 0) or np.any(lam > self.batch_size_pkts):
            raise ConfigError(
                f"per-user mean arrivals must lie in [0, {self.batch_size_pkts}] packets/slot, got {self.per_user_mean_pkts!r}"
            )

    @classmethod
    def uniform(cls, total_pkts: float, n_users: int, batch_size_pkts: int = 4, packet_bits: int = 1024):
        return cls((total_pkts / n_users,) * n_users, batch_size_pkts, packet_bits)

    @property
    def n_users(self) -> int:
        return len(self.per_user_mean_pkts)

    @property
    def batch_bits(self) -> int:
        return self.batch_size_pkts * self.packet_bits

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.per_user_mean_pkts, dtype=float) / self.batch_size_pkts

    @property
    def total_pkts(self) -> float:
        return float(np.sum(self.per_user_mean_pkts))


@dataclass
class QueueState:
    backlog_bits: np.ndarray
    cum_arrivals: np.ndarray
    cum_departures: np.ndarray

    @classmethod
    def empty(cls, n_users: int) -> "QueueState":
        z = lambda: np.zeros(n_users, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z())

    def copy(self) -> "QueueState":
        return QueueState(self.backlog_bits.copy(), self.cum_arrivals.copy(), self.cum_departures.copy())


def arrival_rngs(seed: int, n_users: int) -> list:
    return [user_rng(seed, ARRIVAL_STREAM, u) for u in range(n_users)]


def gen_arrivals(traffic: TrafficConfig, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    """One slot of batch-Bernoulli arrivals in bits, one draw per user substream."""
    u = np.array([r.random() for r in rngs])
    return np.where(u < traffic.probabilities, traffic.batch_bits, 0).astype(np.int64)


def arrival_uniforms(seed: int, n_users: int, n_slots: int) -> np.ndarray:
    """The uniforms :func:`gen_arrivals` would consume, column per user.

    Thresholding the same uniforms at different loads couples the arrival
    processes of a sweep (common random numbers).
    """
    out = np.empty((n_slots, n_users))
    for u, r in enumerate(arrival_rngs(seed, n_users)):
        out[:, u] = r.random(n_slots)
    return out


def arrivals_from_uniforms(traffic: TrafficConfig, uniforms: np.ndarray) -> np.ndarray:
    return np.where(uniforms < traffic.probabilities, traffic.batch_bits, 0).astype(np.int64)


@njit(cache=True)
def _serve(q, cum_a, cum_d, a, granted_bits):
    for n in range(q.shape[0]):
        avail = q[n] + a[n]
        d = granted_bits[n] if granted_bits[n] < avail else avail
        q[n] = avail - d
        cum_a[n] += a[n]
        cum_d[n] += d


def apply_service(state: QueueState, arrivals, decision: ScheduleDecision) -> QueueState:
    """q <- max(q + a - mu, 0) with mu rounded down to whole bits."""
    new = state.copy()
    granted = np.floor(decision.granted_rates).astype(np.int64)
    _serve(new.backlog_bits, new.cum_arrivals, new.cum_departures, np.asarray(arrivals, dtype=np.int64), granted)
    return new


@njit(cache=True)
def _simulate(gains, arrivals, policy, tsbw, p_tot, sigma, cap, warmup):
    t_max, n = gains.shape
    q = np.zeros(n, dtype=np.int64)
    cum_a = np.zeros(n, dtype=np.int64)
    cum_d = np.zeros(n, dtype=np.int64)
    qf = np.empty(n)
    granted = np.zeros(n, dtype=np.int64)
    total = np.empty(t_max, dtype=np.int64)
    mode = np.zeros(t_max, dtype=np.int8)
    weight = np.empty(t_max)
    w_uniform = np.empty(t_max)
    user_sum = np.zeros(n)
    evals = 0
    for t in range(t_max):
        for i in range(n):
            qf[i] = q[i]
        hm, b, m, p, rb, ri, wt, wu, ev = decide_kernel(policy, qf, gains[t], tsbw, p_tot, sigma, cap)
        evals += ev
        granted[:] = 0
        granted[b] = np.int64(math.floor(rb))
        if hm:
            granted[m] = np.int64(math.floor(ri))
            mode[t] = 1
        weight[t] = wt
        w_uniform[t] = wu
        _serve(q, cum_a, cum_d, arrivals[t], granted)
        s = 0
        for i in range(n):
            s += q[i]
            if t >= warmup:
                user_sum[i] += q[i]
        total[t] = s
    return total, mode, weight, w_uniform, user_sum, q, cum_a, cum_d, evals


def stability_verdict(series, mean_arrival_per_slot: float, warmup: int = 0,
                      stable_slope: float = 0.01, unstable_slope: float = 0.02):
    """Classify a total-backlog series by its least-squares growth rate.

    The slope is taken over ``series[warmup:]`` and divided by the mean
    per-slot arrivals (same units as the series). Returns (verdict, slope).
    """
    y = np.asarray(series, dtype=float)[warmup:]
    if y.size < 2:
        raise ValueError("series must extend at least two slots past warmup")
    x = np.arange(y.size, dtype=float)
    xc = x - x.mean()
    raw = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    if mean_arrival_per_slot > 0:
        slope = raw / mean_arrival_per_slot
    else:
        slope = 0.0 if raw == 0 else math.copysign(math.inf, raw)
    first_quarter = y[: max(1, y.size // 4)].mean()
    if slope > unstable_slope:
        return "unstable", slope
    if slope < stable_slope and y[-1] <= 100 * first_quarter:
        return "stable", slope
    return "inconclusive", slope


def littles_delay(mean_backlog_pkts: float, arrival_rate_pkts: float) -> Optional[float]:
    """Mean delay in slots (L = lambda W); None when nothing arrives."""
    if arrival_rate_pkts <= 0:
        return None
    return mean_backlog_pkts / arrival_rate_pkts


@dataclass(frozen=True)
class SimConfig:
    fading: FadingConfig = field(default_factory=FadingConfig)
    traffic: TrafficConfig = field(default_factory=lambda: TrafficConfig.uniform(20.0, 20))
    phy: PhyParams = field(default_factory=PhyParams)
    policy: str = "mwdm"
    horizon_slots: int = 200_000
    warmup_slots: Optional[int] = None  # default: 10% of horizon
    seed: int = 0
    stable_slope: float = 0.01
    unstable_slope: float = 0.02

    def __post_init__(self):
        policy_code(self.policy)
        if self.traffic.n_users != self.fading.n_users:
            raise ConfigError("traffic and fading disagree on the number of users")
        if self.horizon_slots < 2 * self.warmup:
            raise ConfigError("horizon_slots must be at least twice warmup_slots")
        if not self.stable_slope <= self.unstable_slope:
            raise ConfigError("stable_slope must not exceed unstable_slope")

    @property
    def warmup(self) -> int:
        return self.horizon_slots // 10 if self.warmup_slots is None else int(self.warmup_slots)


@dataclass
class SimReport:
    policy: str
    seed: int
    n_users: int
    horizon_slots: int
    warmup_slots: int
    offered_load_pkts: float
    packet_bits: int
    mean_gain: object
    total_power_w: float
    mean_total_backlog_bits: float
    mean_total_backlog_pkts: float
    per_user_mean_bits: list
    delay_slots: Optional[float]
    verdict: str
    slope: float
    pair_evaluations: int
    hm_slots: int
    cum_arrivals_bits: list
    cum_departures_bits: list
    final_backlog_bits: list
    config: dict
    # per-slot series, not part of the JSON summary
    q_total_bits: np.ndarray = field(repr=False, default=None)
    mode: np.ndarray = field(repr=False, default=None)
    weight: np.ndarray = field(repr=False, default=None)
    w_uniform: np.ndarray = field(repr=False, default=None)

    SERIES = ("q_total_bits", "mode", "weight", "w_uniform")

    def summary(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.SERIES}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=False)

    def write_series_csv(self, path, stride: int = 1) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "q_total_bits", "q_total_pkts", "mode", "weight"])
            for t in range(0, self.horizon_slots, stride):
                qb = int(self.q_total_bits[t])
                w.writerow([t, qb, f"{qb / self.packet_bits:.12g}",
                            "hierarchical" if self.mode[t] else "uniform", f"{self.weight[t]:.17g}"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def simulate(config: SimConfig, gains: np.ndarray, arrivals: np.ndarray) -> SimReport:
    """Run the slot loop on a fixed channel and arrival realisation."""
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    arrivals = np.ascontiguousarray(arrivals, dtype=np.int64)
    T = config.horizon_slots
    if gains.shape[0] < T or arrivals.shape[0] < T:
        raise ConfigError("gain/arrival traces shorter than the horizon")
    gains, arrivals = gains[:T], arrivals[:T]
    code = policy_code(config.policy)
    warm = config.warmup
    total, mode, weight, w_u, user_sum, q, cum_a, cum_d, evals = _simulate(
        gains, arrivals, code, *config.phy.kernel_args(), warm
    )
    traffic = config.traffic
    window = T - warm
    mean_bits = float(total[warm:].mean())
    mean_pkts = mean_bits / traffic.packet_bits
    verdict, slope = stability_verdict(
        total, traffic.total_pkts * traffic.packet_bits, warm, config.stable_slope, config.unstable_slope
    )
    return SimReport(
        policy=POLICY_NAMES[code],
        seed=int(config.seed),
        n_users=traffic.n_users,
        horizon_slots=T,
        warmup_slots=warm,
        offered_load_pkts=traffic.total_pkts,
        packet_bits=traffic.packet_bits,
        mean_gain=_jsonable(config.fading.mean_gain),
        total_power_w=config.phy.total_power_w,
        mean_total_backlog_bits=mean_bits,
        mean_total_backlog_pkts=mean_pkts,
        per_user_mean_bits=(user_sum / window).tolist(),
        delay_slots=littles_delay(mean_pkts, traffic.total_pkts),
        verdict=verdict,
        slope=slope,
        pair_evaluations=int(evals),
        hm_slots=int(mode.sum()),
        cum_arrivals_bits=cum_a.tolist(),
        cum_departures_bits=cum_d.tolist(),
        final_backlog_bits=q.tolist(),
        config=_jsonable(asdict(config)),
        q_total_bits=total,
        mode=mode,
        weight=weight,
        w_uniform=w_u,
    )


def run(config: SimConfig, gains: Optional[np.ndarray] = None) -> SimReport:
    """Simulate ``config``; channel and arrivals are derived from ``config.seed``.

    ``gains`` replaces the generated channel (e.g. a replayed trace).
    """
    T = config.horizon_slots
    if gains is None:
        fading = config.fading
        if fading.master_seed != config.seed:
            from dataclasses import replace

            fading = replace(fading, master_seed=config.seed)
        gains = gain_trace(fading, T)
    u = arrival_uniforms(config.seed, config.traffic.n_users, T)
    return simulate(config, gains, arrivals_from_uniforms(config.traffic, u))

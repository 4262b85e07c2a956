"""Slot-sampled correlated Rayleigh fading (Jakes sum-of-sinusoids)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numba import njit

from .phy import ConfigError

# SeedSequence spawn-key domain for fading substreams; arrivals use another one.
FADING_STREAM = 0



@njit(cache=True)
def _sum_of_sinusoids(slots, slot_duration_s, omega, phase, norm):
    """(len(slots), N, 2) in-phase/quadrature sums; shared by step() and trace()."""
    n, _, m = omega.shape
    out = np.empty((slots.shape[0], n, 2))
    for i in range(slots.shape[0]):
        t = slots[i] * slot_duration_s
        for u in range(n):
            for c in range(2):
                acc = 0.0
                for k in range(m):
                    acc += math.cos(omega[u, c, k] * t + phase[u, c, k])
                out[i, u, c] = acc * norm
    return out


@dataclass(frozen=True)
class FadingConfig:
    n_users: int = 20
    slot_duration_s: float = 1.67e-3
    doppler_range_hz: tuple = (5.0, 15.0)
    mean_gain: Union[float, tuple] = 1e-3
    n_oscillators: int = 16
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n_users) < 1:
            raise ConfigError(f"n_users must be >= 1, got {self.n_users!r}")
        if not self.slot_duration_s > 0:
            raise ConfigError(f"slot_duration_s must be positive, got {self.slot_duration_s!r}")
        lo, hi = self.doppler_range_hz
        if not (0 < lo <= hi):
            raise ConfigError(f"doppler_range_hz must satisfy 0 < f_lo <= f_hi, got {self.doppler_range_hz!r}")
        g = np.atleast_1d(np.asarray(self.mean_gain, dtype=float))
        if g.size not in (1, self.n_users) or not np.all(g > 0) or not np.all(np.isfinite(g)):
            raise ConfigError(f"mean_gain must be positive (scalar or one per user), got {self.mean_gain!r}")
        if int(self.n_oscillators) < 8:
            raise ConfigError(f"n_oscillators must be >= 8, got {self.n_oscillators!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")

    def mean_gains(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mean_gain, dtype=float), (self.n_users,)).copy()


def user_rng(master_seed: int, domain: int, user: int) -> np.random.Generator:
    """Independent generator for one user; adding users leaves others untouched."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(domain, user)))


class ChannelProcess:
    """Per-user unit-power complex fading

        c_n(t) = M^-1/2 sum_k [cos(w_d cos(a_k) t + phi_k) + j cos(w_d sin(a_k) t + psi_k)]

    with quarter-circle angles ``a_k = (2 pi k - pi + theta_n) / (4M)``. The random
    rotation ``theta_n`` has |theta_n| in [pi/4, 3pi/4], so all 2M frequencies of a
    user are distinct and positive. The time-averaged power is then exactly one and
    the in-phase autocorrelation of a single realisation is the M-point midpoint
    rule for J0 (a full-circle angle set pairs w with -w and leaves
    phase-dependent cross terms in the time average).
    """

    def __init__(self, config: FadingConfig):
        self.config = config
        n, m = config.n_users, config.n_oscillators
        lo, hi = config.doppler_range_hz
        self.doppler_hz = np.empty(n)
        self.omega = np.empty((n, 2, m))
        self.phase = np.empty((n, 2, m))
        k = np.arange(1, m + 1)
        for u in range(n):
            rng = user_rng(config.master_seed, FADING_STREAM, u)
            fd = rng.uniform(lo, hi)
            theta = rng.uniform(math.pi / 4, 3 * math.pi / 4) * rng.choice((-1.0, 1.0))
            alpha = (2 * math.pi * k - math.pi + theta) / (4 * m)
            self.doppler_hz[u] = fd
            self.omega[u, 0] = 2 * math.pi * fd * np.cos(alpha)
            self.omega[u, 1] = 2 * math.pi * fd * np.sin(alpha)
            self.phase[u] = rng.uniform(0.0, 2 * math.pi, (2, m))
        self._gain = config.mean_gains()
        self._norm = 1.0 / math.sqrt(m)
        self.t = 0

    def complex_at(self, slots: np.ndarray) -> np.ndarray:
        """Unit-power complex fading c_n at the given slot indices, shape (len, N)."""
        s = self._sums(slots)
        return s[..., 0] + 1j * s[..., 1]

    def gains_at(self, slots: np.ndarray) -> np.ndarray:
        s = self._sums(slots)
        return self._gain * (s[..., 0] ** 2 + s[..., 1] ** 2)

    def _sums(self, slots):
        slots = np.ascontiguousarray(slots, dtype=np.float64)
        return _sum_of_sinusoids(slots, self.config.slot_duration_s, self.omega, self.phase, self._norm)

    def step(self) -> np.ndarray:
        """Gains of the current slot; advances the slot counter."""
        g = self.gains_at(np.array([self.t]))[0]
        self.t += 1
        return g

    def trace(self, n_slots: int) -> np.ndarray:
        """Next ``n_slots`` gain vectors as an (n_slots, N) array; advances the counter."""
        g = self.gains_at(np.arange(self.t, self.t + n_slots))
        self.t += n_slots
        return g


def init_channel(config: FadingConfig) -> ChannelProcess:
    return ChannelProcess(config)


def gain_trace(config: FadingConfig, n_slots: int) -> np.ndarray:
    return ChannelProcess(config).trace(n_slots)


def write_trace(path, gains: np.ndarray, start: int = 0) -> None:
    gains = np.asarray(gains)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"h_{i + 1}" for i in range(gains.shape[1])])
        for t, row in enumerate(gains, start):
            w.writerow([t] + [f"{x:.17e}" for x in row])


def read_trace(path) -> np.ndarray:
    """Load a gain trace written by :func:`write_trace` (rows ordered by t)."""
    path = Path(path)
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if not header or header[0] != "t" or len(header) < 2:
            raise ConfigError(f"{path}: expected header 't, h_1, ..., h_N'")
        rows = [row for row in r if row]
    data = np.array([[float(x) for x in row[1:]] for row in rows])
    if data.ndim != 2 or data.shape[1] != len(header) - 1:
        raise ConfigError(f"{path}: ragged trace")
    if np.any(data < 0) or not np.all(np.isfinite(data)):
        raise ConfigError(f"{path}: gains must be finite and nonnegative")
    return data


def bessel_reference(doppler_hz: float, slot_duration_s: float, lags: Sequence[int]) -> np.ndarray:
    """Ideal normalised in-phase autocorrelation J0(2 pi f_d tau T_s)."""
    from scipy.special import j0

    return j0(2 * math.pi * doppler_hz * np.asarray(lags) * slot_duration_s)

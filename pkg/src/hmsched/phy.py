"""Achievable rates under uniform and two-layer hierarchical modulation.

Rates are in bits per slot: ``T_s * BW * log2(1 + SNR)``. The hot kernels are
numba-compiled scalar functions so the slot loop in :mod:`hmsched.sim` and the
Python-facing API share one implementation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numba import njit

HIERARCHICAL = 0
FALLBACK_BASE = 1  # full power to the base-layer (weaker) user, P_mi = 0
FALLBACK_INC = 2  # full power to the incremental-layer (stronger) user, P_mi = P
NO_SERVICE = 3  # both gains zero

_INV_LN2 = 1.0 / math.log(2.0)


class ConfigError(ValueError):
    """Invalid configuration value."""


@dataclass(frozen=True)
class PhyParams:
    slot_duration_s: float = 1.67e-3
    bandwidth_hz: float = 1.25e6
    total_power_w: float = 10.0
    noise_power_w: float = 1e-6
    rate_cap_bits: Optional[float] = None  # None means uncapped

    def __post_init__(self):
        for name in ("slot_duration_s", "bandwidth_hz", "total_power_w", "noise_power_w"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        if self.rate_cap_bits is not None and not self.rate_cap_bits > 0:
            raise ConfigError(f"rate_cap_bits must be positive, got {self.rate_cap_bits!r}")

    @property
    def symbols_per_slot(self) -> float:
        return self.slot_duration_s * self.bandwidth_hz

    @property
    def cap(self) -> float:
        return math.inf if self.rate_cap_bits is None else float(self.rate_cap_bits)

    def with_spectral_cap(self, bits_per_hz: float = 4.0) -> "PhyParams":
        """Cap each stream at ``bits_per_hz`` bit/s/Hz (4 = the 16-QAM top layer)."""
        return replace(self, rate_cap_bits=bits_per_hz * self.symbols_per_slot)

    def uncapped(self) -> "PhyParams":
        return replace(self, rate_cap_bits=None)

    def kernel_args(self):
        return self.symbols_per_slot, self.total_power_w, self.noise_power_w, self.cap


@dataclass(frozen=True)
class PowerSplit:
    base_power_w: float
    incremental_power_w: float

    @classmethod
    def from_incremental(cls, p_mi: float, total_power_w: float) -> "PowerSplit":
        if not 0.0 <= p_mi <= total_power_w:
            raise ValueError(f"incremental power {p_mi!r} outside [0, {total_power_w}]")
        return cls(total_power_w - p_mi, p_mi)

    @property
    def total_power_w(self) -> float:
        return self.base_power_w + self.incremental_power_w

    @property
    def interior(self) -> bool:
        return self.base_power_w > 0.0 and self.incremental_power_w > 0.0


@dataclass(frozen=True)
class PairWeightResult:
    weight: float
    split: PowerSplit
    rate_base: float
    rate_incremental: float
    mode: str  # "hierarchical" | "uniform-fallback"
    fallback_user: Optional[str] = None  # "n" (base role) | "m" (incremental role) | None

    @property
    def hierarchical(self) -> bool:
        return self.mode == "hierarchical"


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _bits(snr, tsbw, cap):
    r = tsbw * math.log1p(snr) * _INV_LN2
    return r if r < cap else cap


@njit(cache=True)
def _rate_um(h, tsbw, p_tot, sigma, cap):
    return _bits(h * p_tot / sigma, tsbw, cap)


@njit(cache=True)
def _rate_base(h, p_b, p_i, tsbw, sigma, cap):
    return _bits(h * p_b / (h * p_i + sigma), tsbw, cap)


@njit(cache=True)
def _rate_inc(h, p_i, tsbw, sigma, cap):
    return _bits(h * p_i / sigma, tsbw, cap)


@njit(cache=True)
def _stationary_point(qn, qm, hn, hm, sigma):
    """Root of the pair-weight derivative, or NaN when it is undefined."""
    den = hn * hm * (qn - qm)
    if den == 0.0:
        return math.nan
    return sigma * (qm * hm - qn * hn) / den


@njit(cache=True)
def _concave_at(qn, qm, hn, hm, p_i, sigma):
    a = hn / (hn * p_i + sigma)
    b = hm / (hm * p_i + sigma)
    return qn * a * a <= qm * b * b


@njit(cache=True)
def _pair_solve(qn, qm, hn, hm, w_base_um, w_inc_um, tsbw, p_tot, sigma, cap):
    """Best power split for the ordered pair hn <= hm.

    ``w_base_um`` / ``w_inc_um`` are the full-power (boundary) weights of the two
    users. Returns (weight, p_mi, rate_base, rate_inc, code). Boundaries win ties.
    """
    if hn <= 0.0 and hm <= 0.0:
        return 0.0, 0.0, 0.0, 0.0, NO_SERVICE
    if w_inc_um > w_base_um:
        best_w = w_inc_um
        best_p = p_tot
        best_code = FALLBACK_INC
    else:
        best_w = w_base_um
        best_p = 0.0
        best_code = FALLBACK_BASE
    if hn > 0.0:
        p = _stationary_point(qn, qm, hn, hm, sigma)
        if p > 0.0 and p < p_tot and _concave_at(qn, qm, hn, hm, p, sigma):
            rb = _rate_base(hn, p_tot - p, p, tsbw, sigma, cap)
            ri = _rate_inc(hm, p, tsbw, sigma, cap)
            w = qn * rb + qm * ri
            if w > best_w:
                return w, p, rb, ri, HIERARCHICAL
    if best_code == FALLBACK_INC:
        return best_w, p_tot, 0.0, _rate_um(hm, tsbw, p_tot, sigma, cap), best_code
    return best_w, best_p, _rate_um(hn, tsbw, p_tot, sigma, cap), 0.0, best_code


# ---------------------------------------------------------------------------
# public API


def _check_gain(h, name="h"):
    if not h >= 0.0:
        raise ValueError(f"{name} must be a nonnegative gain, got {h!r}")


def rate_uniform(h: float, params: PhyParams) -> float:
    """Full-power single-user rate in bits per slot."""
    _check_gain(h)
    tsbw, p_tot, sigma, cap = params.kernel_args()
    return _rate_um(float(h), tsbw, p_tot, sigma, cap)


def rate_base(h_n: float, split: PowerSplit, params: PhyParams) -> float:
    """Base-layer rate; the incremental layer is seen as interference."""
    _check_gain(h_n, "h_n")
    tsbw, _, sigma, cap = params.kernel_args()
    return _rate_base(float(h_n), split.base_power_w, split.incremental_power_w, tsbw, sigma, cap)


def rate_incremental(h_m: float, split: PowerSplit, params: PhyParams) -> float:
    """Incremental-layer rate after the base layer is cancelled."""
    _check_gain(h_m, "h_m")
    tsbw, _, sigma, cap = params.kernel_args()
    return _rate_inc(float(h_m), split.incremental_power_w, tsbw, sigma, cap)


def pair_weight(q_n, q_m, h_n, h_m, p_mi, params: PhyParams) -> float:
    """q_n * rate_base + q_m * rate_incremental at incremental power ``p_mi``."""
    split = PowerSplit.from_incremental(p_mi, params.total_power_w)
    return q_n * rate_base(h_n, split, params) + q_m * rate_incremental(h_m, split, params)


def _check_order(h_n, h_m):
    _check_gain(h_n, "h_n")
    _check_gain(h_m, "h_m")
    if h_n > h_m:
        raise ValueError(f"roles must be channel-ordered (h_n <= h_m), got h_n={h_n!r} > h_m={h_m!r}")


def concavity_condition(q_n, q_m, h_n, h_m, p_mi, params: PhyParams) -> bool:
    """Second-order condition ``q_n*A <= q_m*B`` of the pair weight at ``p_mi``."""
    _check_order(h_n, h_m)
    if not 0.0 <= p_mi <= params.total_power_w:
        raise ValueError(f"p_mi={p_mi!r} outside [0, P]")
    return bool(_concave_at(float(q_n), float(q_m), float(h_n), float(h_m), float(p_mi), params.noise_power_w))


def stationary_point(q_n, q_m, h_n, h_m, params: PhyParams) -> float:
    """Closed-form zero of the pair-weight derivative; NaN if q_n == q_m or a gain is 0."""
    return _stationary_point(float(q_n), float(q_m), float(h_n), float(h_m), params.noise_power_w)


def _result(w, p, rb, ri, code, params) -> PairWeightResult:
    split = PowerSplit.from_incremental(p, params.total_power_w)
    if code == HIERARCHICAL:
        return PairWeightResult(w, split, rb, ri, "hierarchical")
    if code == NO_SERVICE:
        return PairWeightResult(0.0, split, 0.0, 0.0, "uniform-fallback")
    return PairWeightResult(w, split, rb, ri, "uniform-fallback", "n" if code == FALLBACK_BASE else "m")


def optimal_power_split(q_n, q_m, h_n, h_m, params: PhyParams) -> PairWeightResult:
    """Maximise the pair weight over the candidates {0, P, stationary point}.

    The derivative of the pair weight has at most one root in (0, P), so the
    candidate set always contains the global maximiser.
    """
    _check_order(h_n, h_m)
    if q_n < 0 or q_m < 0:
        raise ValueError("queue lengths must be nonnegative")
    tsbw, p_tot, sigma, cap = params.kernel_args()
    q_n, q_m, h_n, h_m = float(q_n), float(q_m), float(h_n), float(h_m)
    w_n = q_n * _rate_um(h_n, tsbw, p_tot, sigma, cap)
    w_m = q_m * _rate_um(h_m, tsbw, p_tot, sigma, cap)
    return _result(*_pair_solve(q_n, q_m, h_n, h_m, w_n, w_m, tsbw, p_tot, sigma, cap), params)


def power_grid(total_power_w: float, grid_points: int, spacing: str = "uniform") -> np.ndarray:
    """Candidate incremental powers, always including 0 and P.

    ``"log"`` spaces the interior points geometrically down to 1e-12 * P, which
    resolves optima near sigma / h that a uniform grid steps over.
    """
    if spacing == "uniform":
        return np.linspace(0.0, total_power_w, grid_points)
    if spacing == "log":
        return np.concatenate(([0.0], np.geomspace(total_power_w * 1e-12, total_power_w, grid_points - 1)))
    raise ValueError(f"unknown grid spacing {spacing!r}")


def grid_power_oracle(q_n, q_m, h_n, h_m, params: PhyParams, grid_points: int = 10_000,
                      spacing: str = "uniform") -> PairWeightResult:
    """Brute-force maximisation of the pair weight over a power grid."""
    _check_order(h_n, h_m)
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    p_tot, sigma = params.total_power_w, params.noise_power_w
    tsbw, cap = params.symbols_per_slot, params.cap
    p = power_grid(p_tot, grid_points, spacing)
    rb = np.minimum(tsbw * np.log2(1.0 + h_n * (p_tot - p) / (h_n * p + sigma)), cap)
    ri = np.minimum(tsbw * np.log2(1.0 + h_m * p / sigma), cap)
    w = q_n * rb + q_m * ri
    k = int(np.argmax(w))
    split = PowerSplit.from_incremental(float(p[k]), p_tot)
    if k == 0:
        return PairWeightResult(float(w[k]), split, float(rb[k]), 0.0, "uniform-fallback", "n")
    if k == grid_points - 1:
        return PairWeightResult(float(w[k]), split, 0.0, float(ri[k]), "uniform-fallback", "m")
    return PairWeightResult(float(w[k]), split, float(rb[k]), float(ri[k]), "hierarchical")


def pair_weight_derivative(q_n, q_m, h_n, h_m, p_mi, params: PhyParams) -> float:
    """Analytic d(pair weight)/d(P_mi) for uncapped rates, in bits per Watt."""
    sigma = params.noise_power_w
    scale = params.symbols_per_slot * _INV_LN2
    return scale * (q_m * h_m / (h_m * p_mi + sigma) - q_n * h_n / (h_n * p_mi + sigma))

"""Max-Weight decision rules: MWUM, MWHM, MWDM and the linear-cost L-MWDM.

Each policy is a pure function of (queues, gains). Ties go to the lowest user
index; pairs are scanned in lexicographic order of their sorted indices and a
later pair must be strictly better to win.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .phy import HIERARCHICAL, PhyParams, PowerSplit, _pair_solve, _rate_um

MWUM, MWHM, MWDM, LMWDM = 0, 1, 2, 3
POLICIES = {"mwum": MWUM, "mwhm": MWHM, "mwdm": MWDM, "lmwdm": LMWDM}
POLICY_NAMES = {v: k for k, v in POLICIES.items()}


def policy_code(name: str) -> int:
    try:
        return POLICIES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None


@dataclass(frozen=True)
class ScheduleDecision:
    mode: str  # "uniform" | "hierarchical"
    served_users: tuple  # (n,) or (n*, m*) with h[n*] <= h[m*]
    split: PowerSplit
    granted_rates: np.ndarray
    weight: float
    pair_evaluations: int


@njit(cache=True)
def _uniform_weights(q, h, tsbw, p_tot, sigma, cap):
    n = h.shape[0]
    r = np.empty(n)
    w = np.empty(n)
    best = 0
    for i in range(n):
        r[i] = _rate_um(h[i], tsbw, p_tot, sigma, cap)
        w[i] = q[i] * r[i]
        if w[i] > w[best]:
            best = i
    return r, w, best


@njit(cache=True)
def _eval_pair(i, j, q, h, w, tsbw, p_tot, sigma, cap):
    # roles by channel; equal gains put the lower index at the base layer
    if h[i] <= h[j]:
        b, m = i, j
    else:
        b, m = j, i
    wt, p, rb, ri, code = _pair_solve(q[b], q[m], h[b], h[m], w[b], w[m], tsbw, p_tot, sigma, cap)
    return wt, b, m, p, rb, ri, code


@njit(cache=True)
def decide_kernel(policy, q, h, tsbw, p_tot, sigma, cap):
    """Returns (hierarchical, base, inc, p_mi, rate_base, rate_inc, weight, w_uniform, evals).

    For a uniform decision ``base`` is the served user and ``inc`` is -1.
    """
    n = h.shape[0]
    r, w, u = _uniform_weights(q, h, tsbw, p_tot, sigma, cap)
    w_u = w[u]
    evals = 0
    best_w = -1.0
    best_b, best_m = -1, -1
    best_p, best_rb, best_ri = 0.0, 0.0, 0.0
    best_code = -1
    if policy == MWHM or policy == MWDM:
        for i in range(n):
            for j in range(i + 1, n):
                wt, b, m, p, rb, ri, code = _eval_pair(i, j, q, h, w, tsbw, p_tot, sigma, cap)
                evals += 1
                if wt > best_w:
                    best_w, best_b, best_m, best_p, best_rb, best_ri, best_code = wt, b, m, p, rb, ri, code
    elif policy == LMWDM:
        for j in range(n):
            if j == u:
                continue
            i0, j0 = (u, j) if u < j else (j, u)
            wt, b, m, p, rb, ri, code = _eval_pair(i0, j0, q, h, w, tsbw, p_tot, sigma, cap)
            evals += 1
            if wt > best_w:
                best_w, best_b, best_m, best_p, best_rb, best_ri, best_code = wt, b, m, p, rb, ri, code
    use_hm = False
    if policy == MWHM:
        use_hm = best_code == HIERARCHICAL
    elif policy == MWDM or policy == LMWDM:
        use_hm = evals > 0 and best_w > w_u
    if use_hm:
        return True, best_b, best_m, best_p, best_rb, best_ri, best_w, w_u, evals
    return False, u, -1, 0.0, r[u], 0.0, w_u, w_u, evals


def _decide(policy: int, q, h, params: PhyParams) -> ScheduleDecision:
    q = np.asarray(q, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if q.shape != h.shape or q.ndim != 1 or q.size < 1:
        raise ValueError("queues and gains must be 1-D arrays of equal length N >= 1")
    if np.any(h < 0) or np.any(q < 0):
        raise ValueError("queues and gains must be nonnegative")
    hm, b, m, p, rb, ri, wt, _, evals = decide_kernel(policy, q, h, *params.kernel_args())
    rates = np.zeros(h.size)
    split = PowerSplit.from_incremental(p, params.total_power_w)
    if hm:
        rates[b] = rb
        rates[m] = ri
        return ScheduleDecision("hierarchical", (int(b), int(m)), split, rates, float(wt), int(evals))
    rates[b] = rb
    return ScheduleDecision("uniform", (int(b),), split, rates, float(wt), int(evals))


def mwum_decide(q, h, params: PhyParams) -> ScheduleDecision:
    """Serve argmax_n q_n * rate_uniform(h_n) at full power."""
    return _decide(MWUM, q, h, params)


def mwhm_decide(q, h, params: PhyParams) -> ScheduleDecision:
    """Best two-user superposition over all channel-ordered pairs.

    A pair whose optimum sits on a power boundary is worth the larger of its two
    single-user weights; if no pair is strictly hierarchical the uniform
    Max-Weight decision is returned.
    """
    if len(h) < 2:
        raise ValueError("MWHM needs at least two users")
    return _decide(MWHM, q, h, params)


def mwdm_decide(q, h, params: PhyParams) -> ScheduleDecision:
    """HM over the best pair iff its weight strictly beats the uniform weight."""
    return _decide(MWDM, q, h, params)


def lmwdm_decide(q, h, params: PhyParams) -> ScheduleDecision:
    """Like MWDM but only pairs containing the uniform winner are tried."""
    return _decide(LMWDM, q, h, params)


DECIDERS = {"mwum": mwum_decide, "mwhm": mwhm_decide, "mwdm": mwdm_decide, "lmwdm": lmwdm_decide}


def decide(policy: str, q, h, params: PhyParams) -> ScheduleDecision:
    return DECIDERS[POLICY_NAMES[policy_code(policy)]](q, h, params)

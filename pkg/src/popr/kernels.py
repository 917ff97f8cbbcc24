"""Numeric inner loops.

Every kernel exists twice: an explicit-loop version that numba compiles, and a
vectorised numpy version. The public names resolve to the compiled loops when
numba is importable and ``POPR_DISABLE_NUMBA`` is unset, otherwise to numpy.
Both variants consume the same inputs (random numbers are drawn by the caller)
so results agree up to floating point rounding.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import HAS_NUMBA, USE_NUMBA, njit

FORWARD = 0
BACKWARD = 1


# --------------------------------------------------------------------------
# per-step discrepancies between aligned discrete actions


def _js_per_step_loop(expert, cand, n_actions, eps):
    n = expert.shape[0]
    out = np.zeros(n)
    norm = 1.0 + n_actions * eps
    lo = eps / norm
    hi = (1.0 + eps) / norm
    for t in range(n):
        a = expert[t]
        b = cand[t]
        if a == b:
            continue
        total = 0.0
        for i in range(n_actions):
            p = hi if i == a else lo
            q = hi if i == b else lo
            m = 0.5 * (p + q)
            total += 0.5 * p * math.log2(p / m) + 0.5 * q * math.log2(q / m)
        out[t] = total
    return out


def _js_per_step_numpy(expert, cand, n_actions, eps):
    norm = 1.0 + n_actions * eps
    p = np.full((expert.shape[0], n_actions), eps / norm)
    q = p.copy()
    rows = np.arange(expert.shape[0])
    p[rows, expert] = (1.0 + eps) / norm
    q[rows, cand] = (1.0 + eps) / norm
    m = 0.5 * (p + q)
    return 0.5 * (p * np.log2(p / m)).sum(axis=1) + 0.5 * (q * np.log2(q / m)).sum(axis=1)


def _kl_per_step_loop(expert, cand, n_actions, eps):
    n = expert.shape[0]
    out = np.zeros(n)
    norm = 1.0 + n_actions * eps
    lo = eps / norm
    hi = (1.0 + eps) / norm
    for t in range(n):
        a = expert[t]
        b = cand[t]
        if a == b:
            continue
        total = 0.0
        for i in range(n_actions):
            p = hi if i == a else lo
            q = hi if i == b else lo
            total += p * math.log2(p / q)
        out[t] = total
    return out


def _kl_per_step_numpy(expert, cand, n_actions, eps):
    norm = 1.0 + n_actions * eps
    p = np.full((expert.shape[0], n_actions), eps / norm)
    q = p.copy()
    rows = np.arange(expert.shape[0])
    p[rows, expert] = (1.0 + eps) / norm
    q[rows, cand] = (1.0 + eps) / norm
    return (p * np.log2(p / q)).sum(axis=1)


# --------------------------------------------------------------------------
# continuous actions


def _distance_per_step_loop(expert, cand, scale):
    n, d = expert.shape
    out = np.empty(n)
    for t in range(n):
        acc = 0.0
        for j in range(d):
            diff = expert[t, j] - cand[t, j]
            acc += diff * diff
        out[t] = min(1.0, math.sqrt(acc) / scale)
    return out


def _distance_per_step_numpy(expert, cand, scale):
    return np.minimum(1.0, np.linalg.norm(expert - cand, axis=1) / scale)


def _gram_mean(a, b, bandwidths):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            d2 = 0.0
            for k in range(a.shape[1]):
                diff = a[i, k] - b[j, k]
                d2 += diff * diff
            for h in bandwidths:
                total += math.exp(-d2 / (2.0 * h * h))
    return total / (a.shape[0] * b.shape[0])


def _mmd2_loop(x, y, bandwidths):
    return _gram_mean(x, x, bandwidths) + _gram_mean(y, y, bandwidths) - 2.0 * _gram_mean(x, y, bandwidths)


def _gram_mean_numpy(a, b, bandwidths):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return sum(np.exp(-d2 / (2.0 * h * h)).mean() for h in bandwidths)


def _mmd2_numpy(x, y, bandwidths):
    return (
        _gram_mean_numpy(x, x, bandwidths)
        + _gram_mean_numpy(y, y, bandwidths)
        - 2.0 * _gram_mean_numpy(x, y, bandwidths)
    )


# --------------------------------------------------------------------------
# ring environment rollouts


def _ring_rollout_loop(n_states, start, slip_prob, epsilon, const_action, u_eps, u_coin, u_slip, u_jump):
    length = u_eps.shape[0]
    states = np.empty(length, dtype=np.int64)
    actions = np.empty(length, dtype=np.int64)
    next_states = np.empty(length, dtype=np.int64)
    s = start
    for t in range(length):
        if const_action >= 0:
            a = const_action
        elif u_eps[t] < epsilon:
            a = min(int(u_coin[t] * 2.0), 1)
        elif s == n_states - 1:
            a = BACKWARD
        else:
            a = FORWARD
        if u_slip[t] < slip_prob:
            o = min(int(u_jump[t] * (n_states - 1)), n_states - 2)
            nxt = o if o < s else o + 1
        elif a == FORWARD:
            nxt = (s + 1) % n_states
        else:
            nxt = (s - 1) % n_states
        states[t] = s
        actions[t] = a
        next_states[t] = nxt
        s = nxt
    return states, actions, next_states


def _ring_rollout_numpy(n_states, start, slip_prob, epsilon, const_action, u_eps, u_coin, u_slip, u_jump):
    # the state recursion is inherently sequential; only per-step decisions are vectorised
    length = u_eps.shape[0]
    random_action = np.minimum((u_coin * 2.0).astype(np.int64), 1)
    explore = u_eps < epsilon
    slipped = u_slip < slip_prob
    jump = np.minimum((u_jump * (n_states - 1)).astype(np.int64), n_states - 2)
    states = np.empty(length, dtype=np.int64)
    actions = np.empty(length, dtype=np.int64)
    s = int(start)
    for t in range(length):
        if const_action >= 0:
            a = const_action
        elif explore[t]:
            a = int(random_action[t])
        else:
            a = BACKWARD if s == n_states - 1 else FORWARD
        states[t] = s
        actions[t] = a
        if slipped[t]:
            o = int(jump[t])
            s = o if o < s else o + 1
        else:
            s = (s + 1) % n_states if a == FORWARD else (s - 1) % n_states
    next_states = np.empty(length, dtype=np.int64)
    next_states[:-1] = states[1:]
    next_states[-1] = s
    return states, actions, next_states


def _mixture_actions_loop(states, n_states, epsilon, u_eps, u_coin):
    out = np.empty(states.shape[0], dtype=np.int64)
    for t in range(states.shape[0]):
        if u_eps[t] < epsilon:
            out[t] = min(int(u_coin[t] * 2.0), 1)
        elif states[t] == n_states - 1:
            out[t] = BACKWARD
        else:
            out[t] = FORWARD
    return out


def _mixture_actions_numpy(states, n_states, epsilon, u_eps, u_coin):
    expert = np.where(states == n_states - 1, BACKWARD, FORWARD)
    random_action = np.minimum((u_coin * 2.0).astype(np.int64), 1)
    return np.where(u_eps < epsilon, random_action, expert).astype(np.int64)


# --------------------------------------------------------------------------
# pairwise posterior comparison


def _pairwise_greater_loop(samples):
    k, s = samples.shape
    out = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            count = 0
            for i in range(s):
                if samples[a, i] > samples[b, i]:
                    count += 1
            out[a, b] = count / s
    return out


def _pairwise_greater_numpy(samples):
    return (samples[:, None, :] > samples[None, :, :]).mean(axis=2)


NUMPY_KERNELS = {
    "js_per_step": _js_per_step_numpy,
    "kl_per_step": _kl_per_step_numpy,
    "distance_per_step": _distance_per_step_numpy,
    "mmd2": _mmd2_numpy,
    "ring_rollout": _ring_rollout_numpy,
    "mixture_actions": _mixture_actions_numpy,
    "pairwise_greater": _pairwise_greater_numpy,
}

if HAS_NUMBA:
    _gram_mean = njit(_gram_mean)
    NUMBA_KERNELS = {
        "js_per_step": njit(_js_per_step_loop),
        "kl_per_step": njit(_kl_per_step_loop),
        "distance_per_step": njit(_distance_per_step_loop),
        "mmd2": njit(_mmd2_loop),
        "ring_rollout": njit(_ring_rollout_loop),
        "mixture_actions": njit(_mixture_actions_loop),
        "pairwise_greater": njit(_pairwise_greater_loop),
    }
else:
    NUMBA_KERNELS = {}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
BACKEND = "numba" if USE_NUMBA else "numpy"

js_per_step = _ACTIVE["js_per_step"]
kl_per_step = _ACTIVE["kl_per_step"]
distance_per_step = _ACTIVE["distance_per_step"]
mmd2 = _ACTIVE["mmd2"]
ring_rollout = _ACTIVE["ring_rollout"]
mixture_actions = _ACTIVE["mixture_actions"]
pairwise_greater = _ACTIVE["pairwise_greater"]

"""Compiled inner loops for event-driven simulation.

Every kernel receives its own ``numpy.random.Generator`` so that results
depend only on the stream, never on scheduling.  Jump sizes are drawn from
Walker/Vose alias tables in O(1).
"""

from __future__ import annotations

import numpy as np
from numba import njit

EXTINCT = 0
ALIVE = 1
CAPPED = 2


@njit(cache=True)
def build_alias(weights):
    """Vose alias table for positive ``weights`` (normalised internally)."""
    n = weights.shape[0]
    total = 0.0
    for k in range(n):
        total += weights[k]
    scaled = weights * (n / total)
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for k in range(n):
        if scaled[k] < 1.0:
            small[ns] = k
            ns += 1
        else:
            large[nl] = k
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        g = large[nl]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
    while ns > 0:
        ns -= 1
        prob[small[ns]] = 1.0
    return prob, alias


@njit(nogil=True, cache=True, inline="always")
def _draw(rng, prob, alias):
    n = prob.shape[0]
    u = rng.random() * n
    k = int(u)
    if k >= n:
        k = n - 1
    if u - k < prob[k]:
        return k
    return alias[k]


@njit(nogil=True, cache=True)
def mbp_final(rng, z0, horizon, rate, prob, alias, jumps, cap):
    """Population at ``horizon``; returns (state, status, stop_time, events)."""
    n = z0
    t = 0.0
    events = 0
    while True:
        if n == 0:
            return n, EXTINCT, t, events
        t += rng.exponential(1.0) / (n * rate)
        if t > horizon:
            return n, ALIVE, horizon, events
        n += jumps[_draw(rng, prob, alias)]
        events += 1
        if n > cap:
            return n, CAPPED, t, events


@njit(nogil=True, cache=True)
def mbp_path(rng, z0, horizon, rate, prob, alias, jumps, cap):
    """Full event path of the branching process."""
    size = 64
    times = np.empty(size)
    pops = np.empty(size, dtype=np.int64)
    times[0] = 0.0
    pops[0] = z0
    m = 1
    n = z0
    t = 0.0
    status = ALIVE
    while True:
        if n == 0:
            status = EXTINCT
            break
        t += rng.exponential(1.0) / (n * rate)
        if t > horizon:
            status = ALIVE
            break
        n += jumps[_draw(rng, prob, alias)]
        if m == size:
            size *= 2
            nt = np.empty(size)
            npop = np.empty(size, dtype=np.int64)
            nt[:m] = times[:m]
            npop[:m] = pops[:m]
            times = nt
            pops = npop
        times[m] = t
        pops[m] = n
        m += 1
        if n > cap:
            status = CAPPED
            break
    return times[:m].copy(), pops[:m].copy(), status


@njit(nogil=True, cache=True)
def mqp_final(rng, w0, horizon, ord_rate, ord_prob, ord_alias, ord_jumps,
              mark_rate, mark_prob, mark_alias, mark_jumps, cap):
    """Q-process at ``horizon``: ``w - 1`` unmarked particles plus one marked line."""
    w = w0
    t = 0.0
    events = 0
    while True:
        total = (w - 1) * ord_rate + mark_rate
        t += rng.exponential(1.0) / total
        if t > horizon:
            return w, ALIVE, horizon, events
        if rng.random() * total < mark_rate:
            w += mark_jumps[_draw(rng, mark_prob, mark_alias)]
        else:
            w += ord_jumps[_draw(rng, ord_prob, ord_alias)]
        events += 1
        if w > cap:
            return w, CAPPED, t, events


@njit(nogil=True, cache=True)
def mqp_path(rng, w0, horizon, ord_rate, ord_prob, ord_alias, ord_jumps,
             mark_rate, mark_prob, mark_alias, mark_jumps, cap):
    size = 64
    times = np.empty(size)
    pops = np.empty(size, dtype=np.int64)
    times[0] = 0.0
    pops[0] = w0
    m = 1
    w = w0
    t = 0.0
    status = ALIVE
    while True:
        total = (w - 1) * ord_rate + mark_rate
        t += rng.exponential(1.0) / total
        if t > horizon:
            break
        if rng.random() * total < mark_rate:
            w += mark_jumps[_draw(rng, mark_prob, mark_alias)]
        else:
            w += ord_jumps[_draw(rng, ord_prob, ord_alias)]
        if m == size:
            size *= 2
            nt = np.empty(size)
            npop = np.empty(size, dtype=np.int64)
            nt[:m] = times[:m]
            npop[:m] = pops[:m]
            times = nt
            pops = npop
        times[m] = t
        pops[m] = w
        m += 1
        if w > cap:
            status = CAPPED
            break
    return times[:m].copy(), pops[:m].copy(), status

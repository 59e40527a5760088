"""Compiled walk kernels and the replica fan-out helper.

Kernels take an increment descriptor produced by ``IncrementSpec.engine_args``:
``(kind, fpar, ivals, icdf, boff, blo, bcdf, bguide, jdown, jup)``.  Lattice walks run
in integer units of the span held in float64, which is exact below 2**53.

On lattices a stretch of ``2**j`` steps is drawn from the precomputed law of
``S_{2**j}`` whenever the whole stretch provably stays inside the current
region (the largest jump bounds how far the walk can move), so crossing times
stay exact while long excursions cost O(distance) instead of O(distance**2).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

CHUNK = 1024

# region codes for _run: walk while the predicate holds
STAY_LT = 0  # s < a
STAY_GE = 1  # s >= a
STAY_GT = 2  # s > a
STAY_LE = 3  # s <= a


@njit(cache=True, nogil=True, inline="always")
def _draw(g, kind, fpar, ivals, icdf):
    if kind == 0:
        u = g.random()
        n = icdf.shape[0]
        if n <= 32:
            i = 0
            while i < n - 1 and u >= icdf[i]:
                i += 1
        else:
            i = np.searchsorted(icdf, u, side="right")
            if i > n - 1:
                i = n - 1
        return ivals[i]
    elif kind == 1:
        e = g.standard_exponential() * fpar[0]
        if g.random() < 0.5:
            return -e
        return e
    elif kind == 2:
        k = int(fpar[0])
        u = g.random()
        i = 0
        while i < k - 1 and u >= fpar[1 + i]:
            i += 1
        return fpar[1 + k + i] + fpar[1 + 2 * k + i] * g.standard_normal()
    else:
        # inverse cdf U**(-1/alpha) - 1 written with U = exp(-E)
        e = np.exp(g.standard_exponential() * fpar[0]) - 1.0
        if g.random() < 0.5:
            return -e
        return e


@njit(cache=True, nogil=True, inline="always")
def _step(g, inc):
    return _draw(g, inc[0], inc[1], inc[2], inc[3])


@njit(cache=True, nogil=True, inline="always")
def _block(g, boff, blo, bcdf, bguide, j):
    u = g.random()
    a = boff[j]
    i = bguide[a + int(u * (boff[j + 1] - a))]
    while bcdf[i] <= u:
        i += 1
    return blo[j] + (i - a)


@njit(cache=True, nogil=True, inline="always")
def _inside(s, mode, a):
    if mode == 0:
        return s < a
    if mode == 1:
        return s >= a
    if mode == 2:
        return s > a
    return s <= a


@njit(cache=True, nogil=True, inline="always")
def _safe_steps(s, mode, a, jdown, jup):
    # math.floor of a true division; float // is far slower in compiled code
    if mode == 0:
        return math.floor((a - 1.0 - s) / jup)
    if mode == 1:
        return math.floor((s - a) / jdown)
    if mode == 2:
        return math.floor((s - a - 1.0) / jdown)
    return math.floor((a - s) / jup)


@njit(cache=True, nogil=True)
def _run_plain(g, kind, fpar, ivals, icdf, s, mode, a, budget):
    prev = s
    steps = 0
    while _inside(s, mode, a):
        if steps >= budget:
            return s, prev, budget + 1
        prev = s
        s = s + _draw(g, kind, fpar, ivals, icdf)
        steps += 1
    return s, prev, steps


@njit(cache=True, nogil=True)
def _run(g, inc, s, mode, a, budget, use_blocks):
    """Walk while the region predicate holds.

    Returns ``(s, prev, steps)``; ``steps > budget`` means the walk was still
    inside after ``budget`` steps.
    """
    kind, fpar, ivals, icdf, boff, blo, bcdf, bguide, jdown, jup = inc
    prev = s
    steps = 0
    nb = boff.shape[0] - 1
    if not (use_blocks and kind == 0 and nb > 1):
        return _run_plain(g, kind, fpar, ivals, icdf, s, mode, a, budget)
    while _inside(s, mode, a):
        if steps >= budget:
            return s, prev, budget + 1
        k = min(_safe_steps(s, mode, a, jdown, jup), budget - steps)
        if k >= 2:
            j = 0
            p = 1
            while j + 1 < nb and p * 2 <= k:
                p *= 2
                j += 1
            s = s + _block(g, boff, blo, bcdf, bguide, j)
            steps += p
        else:
            prev = s
            s = s + _draw(g, kind, fpar, ivals, icdf)
            steps += 1
    return s, prev, steps


@njit(cache=True, nogil=True)
def draw_many_kernel(g, inc, out):
    kind, fpar, ivals, icdf = inc[0], inc[1], inc[2], inc[3]
    for i in range(out.shape[0]):
        out[i] = _draw(g, kind, fpar, ivals, icdf)


@njit(cache=True, nogil=True)
def chain_kernel(g, inc, starts, n_events, down, guard, use_blocks, T, O, U, done):
    for r in range(starts.shape[0]):
        s = starts[r]
        t = 0
        ok = True
        for e in range(n_events):
            if down:
                first, second = STAY_LT, STAY_GE
            else:
                first, second = STAY_GE, STAY_LT
            s, prev, k = _run(g, inc, s, first, 0.0, guard - t, use_blocks)
            if k > guard - t:
                ok = False
            else:
                t += k
                s, prev, k = _run(g, inc, s, second, 0.0, guard - t, use_blocks)
                if k > guard - t:
                    ok = False
                else:
                    t += k
            if not ok:
                for f in range(e, n_events):
                    T[r, f] = -1
                    O[r, f] = np.nan
                    U[r, f] = np.nan
                break
            T[r, e] = t
            O[r, e] = s
            U[r, e] = prev
        done[r] = ok


@njit(cache=True, nogil=True)
def cycle_kernel(g, inc, starts, guard, T, U, O, pmax, pmin, done):
    """First up-crossing with the max/min of ``S_0 .. S_{T-1}`` (single steps)."""
    kind, fpar, ivals, icdf = inc[0], inc[1], inc[2], inc[3]
    for r in range(starts.shape[0]):
        s = starts[r]
        below = s < 0
        mx = s
        mn = s
        t = 0
        prev = s
        ok = True
        while True:
            if t >= guard:
                ok = False
                break
            prev = s
            if prev > mx:
                mx = prev
            if prev < mn:
                mn = prev
            s = s + _draw(g, kind, fpar, ivals, icdf)
            t += 1
            if below:
                if s >= 0:
                    break
            elif s < 0:
                below = True
        done[r] = ok
        T[r] = t if ok else -1
        U[r] = prev
        O[r] = s
        pmax[r] = mx
        pmin[r] = mn


@njit(cache=True, nogil=True)
def ladder_kernel(g, inc, guard, use_blocks, hp, hm, ht, done):
    for r in range(hp.shape[0]):
        ok = True
        s, prev, k = _run(g, inc, 0.0, STAY_LE, 0.0, guard, use_blocks)
        ok = ok and k <= guard
        hp[r] = s
        s, prev, k = _run(g, inc, 0.0, STAY_GE, 0.0, guard, use_blocks)
        ok = ok and k <= guard
        hm[r] = s
        s = _step(g, inc)
        s, prev, k = _run(g, inc, s, STAY_GT, 0.0, guard - 1, use_blocks)
        ok = ok and k <= guard - 1
        ht[r] = s
        done[r] = ok


@njit(cache=True, nogil=True)
def entrance_kernel(g, inc, starts, h, n_events, guard, use_blocks, T, O, done):
    kind, fpar, ivals, icdf = inc[0], inc[1], inc[2], inc[3]
    for r in range(starts.shape[0]):
        s = starts[r]
        t = 0
        ok = True
        e = 0
        while e < n_events and ok:
            # leave [0, h] one step at a time
            while s >= 0 and s <= h:
                if t >= guard:
                    ok = False
                    break
                s = s + _draw(g, kind, fpar, ivals, icdf)
                t += 1
            if not ok:
                break
            if s > h:
                s, prev, k = _run(g, inc, s, STAY_GT, h, guard - t, use_blocks)
            else:
                s, prev, k = _run(g, inc, s, STAY_LT, 0.0, guard - t, use_blocks)
            if k > guard - t:
                ok = False
                break
            t += k
            if s >= 0 and s <= h:
                T[r, e] = t
                O[r, e] = s
                e += 1
        if not ok:
            for f in range(e, n_events):
                T[r, f] = -1
                O[r, f] = np.nan
        done[r] = ok


@njit(cache=True, nogil=True)
def count_up_kernel(g, inc, starts, n_steps, use_blocks, out):
    for r in range(starts.shape[0]):
        s = starts[r]
        t = 0
        c = 0
        while t < n_steps:
            if s >= 0:
                s, prev, k = _run(g, inc, s, STAY_GE, 0.0, n_steps - t, use_blocks)
                if k > n_steps - t:
                    break
                t += k
            s, prev, k = _run(g, inc, s, STAY_LT, 0.0, n_steps - t, use_blocks)
            if k > n_steps - t:
                break
            t += k
            c += 1
        out[r] = c


def draw_many(g, inc, out):
    draw_many_kernel(g, inc, out)


def n_threads() -> int:
    env = os.environ.get("OVERSHOOT_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_chunks(fn, m: int, seed: int, tag: int, chunk: int = CHUNK):
    """Apply ``fn(rng_stream, lo, hi)`` to replica chunks ``[lo, hi)``.

    Chunk ``c`` always draws from stream ``(tag << 32) + c`` so results do not
    depend on the thread count.  Results come back in chunk order.
    """
    from .increments import RngStream

    bounds = [(lo, min(lo + chunk, m)) for lo in range(0, m, chunk)]
    tasks = [(RngStream(seed, (int(tag) << 32) + c), lo, hi) for c, (lo, hi) in enumerate(bounds)]
    workers = min(n_threads(), len(tasks))
    if workers <= 1:
        return [fn(rs, lo, hi) for rs, lo, hi in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda a: fn(*a), tasks))

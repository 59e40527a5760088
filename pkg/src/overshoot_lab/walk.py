"""Crossing events, entrance events and ladder heights of random walks.

Zero is treated asymmetrically: an up-crossing at step ``k`` means
``S_{k-1} < 0 <= S_k`` and a down-crossing means ``S_{k-1} >= 0 > S_k``.

Each operation comes in two flavours.  The scalar functions
(``simulate_overshoot_chain`` and friends) follow one trajectory with a caller
supplied stream and raise :class:`GuardExceeded` when the step budget runs out.
The ``*_batch`` functions fan replicas out over seeded streams and report
trajectories that hit the guard as censored instead of raising.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
import numpy as np

from . import _engine
from .errors import GuardExceeded
from .increments import IncrementSpec, _as_rng

__all__ = [
    "DEFAULT_GUARD",
    "CrossingEvent",
    "LadderSample",
    "EntranceEvent",
    "ChainBatch",
    "CycleBatch",
    "LadderBatch",
    "EntranceBatch",
    "simulate_overshoot_chain",
    "simulate_down_chain",
    "simulate_entrance_chain",
    "sample_ladders",
    "count_upcrossings",
    "chain_batch",
    "cycle_batch",
    "ladder_batch",
    "entrance_batch",
    "count_upcrossings_batch",
    "write_events_csv",
]

DEFAULT_GUARD = 10**9


@dataclass(frozen=True)
class CrossingEvent:
    index: int
    time: int
    overshoot: float
    undershoot: float
    direction: str


@dataclass(frozen=True)
class LadderSample:
    h_plus: float
    h_minus: float
    h_tilde_minus: float


@dataclass(frozen=True)
class EntranceEvent:
    index: int
    time: int
    position: float


# ---------------------------------------------------------------------------
# argument checks
# ---------------------------------------------------------------------------


def _start_units(spec: IncrementSpec, starts) -> np.ndarray:
    """Starting points in engine units; lattice starts must lie on ``d * Z``."""
    arr = np.atleast_1d(np.asarray(starts, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError("starting points must be finite")
    if not spec.is_lattice:
        return arr.copy()
    u = arr / spec.span_d
    r = np.round(u)
    if np.any(np.abs(u - r) > 1e-9 * np.maximum(1.0, np.abs(u))):
        raise ValueError(f"starting points must lie on the lattice {spec.span_d:g}Z")
    return r


def _check_count(name: str, n: int, minimum: int = 1) -> int:
    n = int(n)
    if n < minimum:
        raise ValueError(f"{name} must be >= {minimum}")
    return n


def _check_guard(guard) -> int:
    guard = int(guard)
    if guard < 1:
        raise ValueError("guard must be a positive step count")
    return guard


def _level_units(spec: IncrementSpec, h: float) -> float:
    if not (isinstance(h, (int, float, np.integer, np.floating)) and math.isfinite(h) and h > 0):
        raise ValueError("interval length h must be positive and finite")
    if spec.is_lattice:
        u = h / spec.span_d
        if abs(u - round(u)) > 1e-9 * max(1.0, abs(u)):
            raise ValueError(f"h must be a multiple of the span {spec.span_d:g}")
        return float(round(u))
    return float(h)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


@dataclass
class ChainBatch:
    """Crossing events of ``m`` replicas; row ``r`` holds events ``1..n``.

    Censored rows (``done[r]`` false) carry ``-1`` times and NaN positions
    from the first unfinished event on.
    """

    times: np.ndarray
    overshoots: np.ndarray
    undershoots: np.ndarray
    done: np.ndarray
    direction: str
    guard: int

    @property
    def n_censored(self) -> int:
        return int((~self.done).sum())

    def completed(self):
        """Arrays restricted to uncensored replicas."""
        d = self.done
        return self.times[d], self.overshoots[d], self.undershoots[d]

    def events(self, replica: int) -> list[CrossingEvent]:
        out = []
        for k in range(self.times.shape[1]):
            if self.times[replica, k] < 0:
                break
            out.append(
                CrossingEvent(
                    k + 1,
                    int(self.times[replica, k]),
                    float(self.overshoots[replica, k]),
                    float(self.undershoots[replica, k]),
                    self.direction,
                )
            )
        return out


@dataclass
class CycleBatch:
    """First up-crossing of each replica with path extremes before it.

    ``path_max``/``path_min`` range over ``S_0, ..., S_{T_1 - 1}``.
    """

    starts: np.ndarray
    times: np.ndarray
    undershoots: np.ndarray
    overshoots: np.ndarray
    path_max: np.ndarray
    path_min: np.ndarray
    done: np.ndarray

    @property
    def n_censored(self) -> int:
        return int((~self.done).sum())


@dataclass
class LadderBatch:
    h_plus: np.ndarray
    h_minus: np.ndarray
    h_tilde_minus: np.ndarray
    done: np.ndarray

    @property
    def n_censored(self) -> int:
        return int((~self.done).sum())

    def samples(self) -> list[LadderSample]:
        d = self.done
        return [LadderSample(float(a), float(b), float(c)) for a, b, c in zip(self.h_plus[d], self.h_minus[d], self.h_tilde_minus[d])]


@dataclass
class EntranceBatch:
    times: np.ndarray
    positions: np.ndarray
    done: np.ndarray
    h: float

    @property
    def n_censored(self) -> int:
        return int((~self.done).sum())


def _broadcast_starts(spec, starts, m):
    units = _start_units(spec, starts)
    if m is None:
        return units
    m = _check_count("m", m)
    if units.size == 1:
        return np.full(m, units[0])
    if units.size != m:
        raise ValueError("starts must be a scalar or have length m")
    return units


def chain_batch(
    spec: IncrementSpec,
    starts,
    n: int,
    seed: int,
    *,
    m: int | None = None,
    direction: str = "up",
    guard: int = DEFAULT_GUARD,
    tag: int = 0,
) -> ChainBatch:
    """Run ``n`` crossings of the given direction for every starting point."""
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    n = _check_count("n", n)
    guard = _check_guard(guard)
    units = _broadcast_starts(spec, starts, m)
    inc = spec.engine_args()
    down = direction == "down"

    def work(rs, lo, hi):
        k = hi - lo
        T = np.empty((k, n), dtype=np.int64)
        O = np.empty((k, n))
        U = np.empty((k, n))
        done = np.empty(k, dtype=np.bool_)
        _engine.chain_kernel(rs.generator, inc, units[lo:hi], n, down, guard, True, T, O, U, done)
        return T, O, U, done

    parts = _engine.map_chunks(work, units.size, seed, tag)
    T = np.concatenate([p[0] for p in parts])
    O = spec.from_units(np.concatenate([p[1] for p in parts]))
    U = spec.from_units(np.concatenate([p[2] for p in parts]))
    done = np.concatenate([p[3] for p in parts])
    return ChainBatch(T, O, U, done, direction, guard)


def cycle_batch(spec: IncrementSpec, starts, seed: int, *, m: int | None = None, guard: int = DEFAULT_GUARD, tag: int = 0) -> CycleBatch:
    """First up-crossing from each start, tracking the path maximum and minimum.

    Every step is simulated individually so the extremes are exact.
    """
    guard = _check_guard(guard)
    units = _broadcast_starts(spec, starts, m)
    inc = spec.engine_args()

    def work(rs, lo, hi):
        k = hi - lo
        arrs = [np.empty(k, dtype=np.int64)] + [np.empty(k) for _ in range(4)] + [np.empty(k, dtype=np.bool_)]
        _engine.cycle_kernel(rs.generator, inc, units[lo:hi], guard, *arrs)
        return arrs

    parts = _engine.map_chunks(work, units.size, seed, tag)
    cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    T, U, O, mx, mn, done = cols
    return CycleBatch(
        spec.from_units(units), T, spec.from_units(U), spec.from_units(O), spec.from_units(mx), spec.from_units(mn), done
    )


def ladder_batch(spec: IncrementSpec, m: int, seed: int, *, guard: int = DEFAULT_GUARD, tag: int = 0) -> LadderBatch:
    """``m`` ladder-height triples; each height comes from its own walk started at 0."""
    m = _check_count("m", m)
    guard = _check_guard(guard)
    inc = spec.engine_args()

    def work(rs, lo, hi):
        k = hi - lo
        hp, hm, ht = np.empty(k), np.empty(k), np.empty(k)
        done = np.empty(k, dtype=np.bool_)
        _engine.ladder_kernel(rs.generator, inc, guard, True, hp, hm, ht, done)
        return hp, hm, ht, done

    parts = _engine.map_chunks(work, m, seed, tag)
    hp, hm, ht, done = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return LadderBatch(spec.from_units(hp), spec.from_units(hm), spec.from_units(ht), done)


def entrance_batch(
    spec: IncrementSpec,
    h: float,
    starts,
    n: int,
    seed: int,
    *,
    m: int | None = None,
    guard: int = DEFAULT_GUARD,
    tag: int = 0,
) -> EntranceBatch:
    """``n`` entrances into ``[0, h]`` per replica."""
    hu = _level_units(spec, h)
    n = _check_count("n", n)
    guard = _check_guard(guard)
    units = _broadcast_starts(spec, starts, m)
    inc = spec.engine_args()

    def work(rs, lo, hi):
        k = hi - lo
        T = np.empty((k, n), dtype=np.int64)
        O = np.empty((k, n))
        done = np.empty(k, dtype=np.bool_)
        _engine.entrance_kernel(rs.generator, inc, units[lo:hi], hu, n, guard, True, T, O, done)
        return T, O, done

    parts = _engine.map_chunks(work, units.size, seed, tag)
    T = np.concatenate([p[0] for p in parts])
    O = spec.from_units(np.concatenate([p[1] for p in parts]))
    done = np.concatenate([p[2] for p in parts])
    return EntranceBatch(T, O, done, float(h))


def count_upcrossings_batch(spec: IncrementSpec, starts, n_steps: int, seed: int, *, m: int | None = None, tag: int = 0) -> np.ndarray:
    """Up-crossing counts within the first ``n_steps`` steps, one per replica."""
    n_steps = _check_count("n_steps", n_steps)
    units = _broadcast_starts(spec, starts, m)
    inc = spec.engine_args()

    def work(rs, lo, hi):
        out = np.empty(hi - lo, dtype=np.int64)
        _engine.count_up_kernel(rs.generator, inc, units[lo:hi], n_steps, True, out)
        return out

    return np.concatenate(_engine.map_chunks(work, units.size, seed, tag))


# ---------------------------------------------------------------------------
# single-trajectory API
# ---------------------------------------------------------------------------


def _single_chain(spec, x, n, rng, guard, direction):
    n = _check_count("n", n)
    guard = _check_guard(guard)
    units = _start_units(spec, x)
    if units.size != 1:
        raise ValueError("x must be a single starting point")
    T = np.empty((1, n), dtype=np.int64)
    O = np.empty((1, n))
    U = np.empty((1, n))
    done = np.empty(1, dtype=np.bool_)
    _engine.chain_kernel(_as_rng(rng), spec.engine_args(), units, n, direction == "down", guard, True, T, O, U, done)
    batch = ChainBatch(T, spec.from_units(O), spec.from_units(U), done, direction, guard)
    events = batch.events(0)
    if not done[0]:
        raise GuardExceeded(
            f"step guard {guard} elapsed after {len(events)} of {n} {direction}-crossings",
            steps=guard,
            events=events,
        )
    return events


def simulate_overshoot_chain(spec: IncrementSpec, x: float, n: int, rng, guard: int = DEFAULT_GUARD) -> list[CrossingEvent]:
    """The first ``n`` up-crossings of the walk started at ``x``."""
    return _single_chain(spec, x, n, rng, guard, "up")


def simulate_down_chain(spec: IncrementSpec, x: float, n: int, rng, guard: int = DEFAULT_GUARD) -> list[CrossingEvent]:
    """The first ``n`` down-crossings of the walk started at ``x``."""
    return _single_chain(spec, x, n, rng, guard, "down")


def simulate_entrance_chain(spec: IncrementSpec, h: float, x: float, n: int, rng, guard: int = DEFAULT_GUARD) -> list[EntranceEvent]:
    """The first ``n`` entrances into ``[0, h]`` from outside."""
    hu = _level_units(spec, h)
    n = _check_count("n", n)
    guard = _check_guard(guard)
    units = _start_units(spec, x)
    if units.size != 1:
        raise ValueError("x must be a single starting point")
    T = np.empty((1, n), dtype=np.int64)
    O = np.empty((1, n))
    done = np.empty(1, dtype=np.bool_)
    _engine.entrance_kernel(_as_rng(rng), spec.engine_args(), units, hu, n, guard, True, T, O, done)
    pos = spec.from_units(O[0])
    events = [EntranceEvent(k + 1, int(T[0, k]), float(pos[k])) for k in range(n) if T[0, k] >= 0]
    if not done[0]:
        raise GuardExceeded(f"step guard {guard} elapsed after {len(events)} of {n} entrances", steps=guard, events=events)
    return events


def sample_ladders(spec: IncrementSpec, m: int, rng, guard: int = DEFAULT_GUARD) -> list[LadderSample]:
    """``m`` independent ladder-height triples ``(H+, H-, weak H-)``."""
    m = _check_count("m", m)
    guard = _check_guard(guard)
    hp, hm, ht = np.empty(m), np.empty(m), np.empty(m)
    done = np.empty(m, dtype=np.bool_)
    _engine.ladder_kernel(_as_rng(rng), spec.engine_args(), guard, True, hp, hm, ht, done)
    if not done.all():
        raise GuardExceeded(f"step guard {guard} elapsed on {int((~done).sum())} of {m} ladder walks", steps=guard)
    hp, hm, ht = spec.from_units(hp), spec.from_units(hm), spec.from_units(ht)
    return [LadderSample(float(a), float(b), float(c)) for a, b, c in zip(hp, hm, ht)]


def count_upcrossings(spec: IncrementSpec, x: float, n_steps: int, rng) -> int:
    """Number of ``k <= n_steps`` with ``S_{k-1} < 0 <= S_k``."""
    n_steps = _check_count("n_steps", n_steps)
    units = _start_units(spec, x)
    out = np.empty(1, dtype=np.int64)
    _engine.count_up_kernel(_as_rng(rng), spec.engine_args(), units[:1], n_steps, True, out)
    return int(out[0])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _num(v: float) -> str:
    return format(float(v), ".17g")


def write_events_csv(target, events) -> None:
    """Write ``replica,n,T_n,O_n,U_n,direction`` rows.

    ``events`` is a :class:`ChainBatch` or an iterable of
    ``(replica, CrossingEvent)`` pairs.  ``target`` is a path or text stream.
    """
    if isinstance(events, ChainBatch):
        b = events
        rows = (
            (r, k + 1, int(b.times[r, k]), b.overshoots[r, k], b.undershoots[r, k], b.direction)
            for r in range(b.times.shape[0])
            for k in range(b.times.shape[1])
            if b.times[r, k] >= 0
        )
    else:
        rows = ((r, e.index, e.time, e.overshoot, e.undershoot, e.direction) for r, e in events)
    own = not isinstance(target, io.TextIOBase)
    fh = open(target, "w", newline="") if own else target
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "n", "T_n", "O_n", "U_n", "direction"])
        for r, k, t, o, u, d in rows:
            w.writerow([r, k, t, _num(o), _num(u), d])
    finally:
        if own:
            fh.close()

"""Transition kernels behind the overshoot chain.

``P(x, .)`` is the law of ``-U_1 - d`` for the walk started at ``x`` and
``Q(x, {y}) = P(X = x + y + d) / P(X >= x + d)``; the overshoot chain moves
by ``PQ``.  ``Q`` is built exactly on lattices, ``P`` only by simulation.
Rows of ``Q`` whose conditioning event is empty are set to a unit mass at 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats as sps

from .errors import GuardExceeded, InsufficientSamples
from .increments import IncrementSpec, LatticePmf, RngStream
from .measures import pi_plus, sample_measure
from .stats import N_BOOT, EmpiricalDistribution, tv_distance
from .walk import DEFAULT_GUARD, chain_batch, cycle_batch

__all__ = [
    "LatticeKernel",
    "q_kernel_lattice",
    "detailed_balance_q",
    "p_kernel_mc",
    "p_matrix_mc",
    "detailed_balance_p_mc",
    "compose_check",
    "time_reversal_check",
    "support_coverage",
    "FluxPair",
    "ReversalReport",
]

DEFAULT_TAIL = Fraction(1, 10**8)


def _require_lattice(spec):
    if not isinstance(spec, LatticePmf):
        raise TypeError("exact kernels need a LatticePmf increment law")


@dataclass(frozen=True, eq=False)
class LatticeKernel:
    """Row-stochastic matrix on the lattice points ``states`` (natural units).

    ``exact`` holds the entries as fractions when they are known exactly.
    ``deficit[i]`` is the row mass lost to truncation.
    """

    states: tuple
    matrix: np.ndarray
    deficit: np.ndarray
    exact: tuple | None = None

    def index(self, x: float) -> int:
        i = int(np.searchsorted(self.states, x))
        if i >= len(self.states) or not math.isclose(self.states[i], x, abs_tol=1e-9):
            raise KeyError(f"{x!r} is not a state of this kernel")
        return i

    def prob(self, x: float, y: float) -> float:
        return float(self.matrix[self.index(x), self.index(y)])

    def to_csv(self, target) -> None:
        """Nonzero entries as ``x,y,prob`` rows."""
        own = not isinstance(target, io.TextIOBase)
        fh = open(target, "w", newline="") if own else target
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "prob"])
            for i, x in enumerate(self.states):
                for j, y in enumerate(self.states):
                    p = self.matrix[i, j]
                    if p != 0:
                        w.writerow([format(x, ".17g"), format(y, ".17g"), format(p, ".17g")])
        finally:
            if own:
                fh.close()


def _default_top_unit(spec: LatticePmf) -> int:
    """Smallest unit ``k`` with ``pi_plus([0, k d]) >= 1 - 1e-8``."""
    m = pi_plus(spec)
    acc = Fraction(0)
    for a, p in zip(m.atoms, m.masses):
        acc += p
        if acc >= 1 - DEFAULT_TAIL:
            return int(a / spec.span)
    return int(m.atoms[-1] / spec.span)


def _truncation_units(spec: LatticePmf, K) -> int:
    if K is None:
        return _default_top_unit(spec)
    u = Fraction(repr(float(K))) / spec.span if not isinstance(K, (int, Fraction)) else Fraction(K) / spec.span
    if u < 0:
        raise ValueError("truncation K must be nonnegative")
    return int(math.floor(u))


def q_kernel_lattice(spec: IncrementSpec, K: float | None = None) -> LatticeKernel:
    """Exact ``Q`` on ``{0, d, ..., K}``; ``K`` defaults to the ``1 - 1e-8`` quantile of ``pi_plus``."""
    _require_lattice(spec)
    top = _truncation_units(spec, K)
    d = spec.span
    n = top + 1
    rows = []
    for xu in range(n):
        denom = _geq(spec, (xu + 1) * d)
        if denom == 0:
            row = [Fraction(0)] * n
            row[0] = Fraction(1)
        else:
            row = [spec.pmf_exact((xu + yu + 1) * d) / denom for yu in range(n)]
        rows.append(tuple(row))
    mat = np.array([[float(v) for v in r] for r in rows])
    deficit = np.array([float(1 - sum(r)) for r in rows])
    states = tuple(float(u * d) for u in range(n))
    return LatticeKernel(states, mat, deficit, tuple(rows))


def _geq(spec: LatticePmf, x: Fraction) -> Fraction:
    """``P(X >= x)``."""
    return spec.tail_upper_exact(x) + spec.pmf_exact(x)


def detailed_balance_q(spec: IncrementSpec, K: float | None = None) -> float:
    """``max |pi(x) Q(x, y) - pi(y) Q(y, x)|`` over the truncated states, in exact arithmetic."""
    q = q_kernel_lattice(spec, K)
    m = pi_plus(spec)
    d = spec.span
    pi = {int(a / d): p for a, p in zip(m.atoms, m.masses)}
    n = len(q.states)
    worst = Fraction(0)
    for i in range(n):
        for j in range(i + 1, n):
            r = abs(pi.get(i, Fraction(0)) * q.exact[i][j] - pi.get(j, Fraction(0)) * q.exact[j][i])
            if r > worst:
                worst = r
    return float(worst)


# ---------------------------------------------------------------------------
# Monte Carlo side
# ---------------------------------------------------------------------------


def _undershoot_values(spec, batch, censored):
    if batch.n_censored:
        if censored == "raise":
            raise GuardExceeded(f"{batch.n_censored} replicas hit the step guard {batch.guard}", steps=batch.guard)
    _, _, U = batch.completed()
    return -U[:, 0] - spec.span_d


def p_kernel_mc(
    spec: IncrementSpec,
    x: float,
    m: int,
    seed: int,
    *,
    tag: int = 0,
    guard: int = DEFAULT_GUARD,
    censored: str = "raise",
    width: float | None = None,
) -> EmpiricalDistribution:
    """Empirical law of ``-U_1 - d`` from ``m`` walks started at ``x``.

    ``censored="drop"`` discards replicas that hit the guard instead of raising.
    """
    if censored not in ("raise", "drop"):
        raise ValueError("censored must be 'raise' or 'drop'")
    b = chain_batch(spec, x, 1, seed, m=m, guard=guard, tag=tag)
    vals = _undershoot_values(spec, b, censored)
    return EmpiricalDistribution.for_spec(spec, vals, width)


def p_matrix_mc(spec: IncrementSpec, states, m: int, seed: int, *, tag: int = 0, guard: int = DEFAULT_GUARD) -> np.ndarray:
    """Rows ``P(x, .)`` estimated on the lattice points ``states`` (columns follow ``states``).

    Mass landing outside ``states`` is dropped, so rows may sum to less than 1.
    Replicas that hit the guard are dropped.
    """
    _require_lattice(spec)
    states = np.asarray(states, dtype=float)
    d = spec.span_d
    keys = np.round(states / d).astype(np.int64)
    col = {int(k): j for j, k in enumerate(keys)}
    out = np.zeros((states.size, states.size))
    for i, x in enumerate(states):
        emp = p_kernel_mc(spec, x, m, seed, tag=tag + i, guard=guard, censored="drop")
        for k, c in emp.counts.items():
            j = col.get(k)
            if j is not None:
                out[i, j] = c / emp.n
    return out


def compose_check(
    spec: IncrementSpec,
    x: float,
    n: int,
    m: int,
    seed: int,
    *,
    m_prime: int | None = None,
    tag: int = 0,
    guard: int = DEFAULT_GUARD,
) -> float:
    """TV between the simulated law of ``O_n`` from ``x`` and ``delta_x (P Q)**n``.

    ``Q`` is exact; ``P`` is estimated with ``m_prime`` walks per state on
    ``{0, ..., max(M+, |M-|) - d}`` plus the start ``x``.  Replicas that
    hit the guard are dropped on both sides.
    """
    _require_lattice(spec)
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    m_prime = m if m_prime is None else int(m_prime)
    d = spec.span_d
    top = max(spec.m_plus, abs(spec.m_minus)) - d
    grid = [k * d for k in range(int(round(top / d)) + 1)]
    q = q_kernel_lattice(spec, top)
    states = sorted(set(grid) | {float(x)})
    # Q on the enlarged state list: the start is only ever a source of P
    Qf = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        if s in grid:
            for j, t in enumerate(states):
                if t in grid:
                    Qf[i, j] = q.prob(s, t)
    P = p_matrix_mc(spec, states, m_prime, seed, tag=tag + 1, guard=guard)
    v = np.zeros(len(states))
    v[states.index(float(x))] = 1.0
    for _ in range(n):
        v = v @ P @ Qf
    exact = {s: p for s, p in zip(states, v) if p > 0}
    b = chain_batch(spec, x, n, seed, m=m, guard=guard, tag=tag)
    _, O, _ = b.completed()
    if O.shape[0] == 0:
        raise GuardExceeded("every replica hit the step guard", steps=b.guard)
    emp = EmpiricalDistribution.from_samples(O[:, n - 1], span=d)
    return tv_distance(emp, exact)


# ---------------------------------------------------------------------------
# reversibility of P
# ---------------------------------------------------------------------------


@dataclass
class FluxPair:
    """Flux estimates ``pi(A) P(A, B)`` and ``pi(B) P(B, A)`` from independent halves."""

    a: object
    b: object
    flux_ab: float
    flux_ba: float
    ci_ab: tuple[float, float]
    ci_ba: tuple[float, float]
    counts: tuple[int, int]

    @property
    def overlap(self) -> bool:
        return self.ci_ab[0] <= self.ci_ba[1] and self.ci_ba[0] <= self.ci_ab[1]


def _member(spec, vals, bucket):
    if spec.is_lattice:
        return np.abs(vals - float(bucket)) < 1e-9 * max(1.0, abs(float(bucket)))
    lo, hi = bucket
    return (vals >= lo) & (vals < hi)


def _stationary_pairs(spec, m, seed, tag, guard):
    """``(S_0, -U_1 - d)`` for replicas started from ``pi_plus``; censored replicas dropped."""
    g = RngStream(seed, (int(tag) << 32) + 0xFFFFFFFF).generator
    s0 = sample_measure(pi_plus(spec), g, m)
    b = chain_batch(spec, s0, 1, seed, guard=guard, tag=tag)
    keep = b.done
    return s0[keep], -b.undershoots[keep, 0] - spec.span_d, int((~keep).sum())


def detailed_balance_p_mc(
    spec: IncrementSpec,
    pairs,
    m: int,
    seed: int,
    *,
    level: float = 0.95,
    n_boot: int = N_BOOT,
    tag: int = 0,
    guard: int = DEFAULT_GUARD,
) -> list[FluxPair]:
    """Compare ``pi(A) P(A, B)`` with ``pi(B) P(B, A)`` for each bucket pair.

    Buckets are atoms on lattices and ``(lo, hi)`` bins otherwise.  The two
    fluxes of a pair come from independent halves of ``m`` stationary
    replicas and carry bootstrap confidence intervals.
    """
    half = int(m) // 2
    if half < 1:
        raise ValueError("m must be at least 2")
    xa, ya, _ = _stationary_pairs(spec, half, seed, tag, guard)
    xb, yb, _ = _stationary_pairs(spec, half, seed, tag + 1, guard)
    g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(tag) + 104729,)))
    lo_q, hi_q = (1 - level) / 2, 1 - (1 - level) / 2
    out = []
    for A, B in pairs:
        k_ab = int(np.sum(_member(spec, xa, A) & _member(spec, ya, B)))
        k_ba = int(np.sum(_member(spec, xb, B) & _member(spec, yb, A)))
        if min(k_ab, k_ba) < 100:
            raise InsufficientSamples(f"pair {A!r}, {B!r}: flux counts {k_ab}, {k_ba} below 100")
        na, nb = xa.size, xb.size
        boot_ab = g.binomial(na, k_ab / na, n_boot) / na
        boot_ba = g.binomial(nb, k_ba / nb, n_boot) / nb
        out.append(
            FluxPair(
                A,
                B,
                k_ab / na,
                k_ba / nb,
                tuple(np.quantile(boot_ab, [lo_q, hi_q]).tolist()),
                tuple(np.quantile(boot_ba, [lo_q, hi_q]).tolist()),
                (k_ab, k_ba),
            )
        )
    return out


# ---------------------------------------------------------------------------
# time reversal of one excursion
# ---------------------------------------------------------------------------


def _pooled_chi2(a: np.ndarray, b: np.ndarray, min_count: int = 10) -> float:
    """Chi-square homogeneity p-value on shared categories, merging sparse neighbours."""
    cats = np.union1d(a, b)
    ca = np.searchsorted(cats, a)
    cb = np.searchsorted(cats, b)
    fa = np.bincount(ca, minlength=cats.size)
    fb = np.bincount(cb, minlength=cats.size)
    rows_a, rows_b = [], []
    acc_a = acc_b = 0
    for u, v in zip(fa, fb):
        acc_a += u
        acc_b += v
        if acc_a + acc_b >= 2 * min_count and min(acc_a, acc_b) >= 1:
            rows_a.append(acc_a)
            rows_b.append(acc_b)
            acc_a = acc_b = 0
    if acc_a or acc_b:
        if rows_a:
            rows_a[-1] += acc_a
            rows_b[-1] += acc_b
        else:
            rows_a.append(acc_a)
            rows_b.append(acc_b)
    if len(rows_a) < 2:
        return 1.0
    return float(sps.chi2_contingency(np.array([rows_a, rows_b]), correction=False)[1])


def _log_binned(t: np.ndarray) -> np.ndarray:
    """Crossing times grouped on a base-2 scale so the chi-square cells stay populated."""
    return np.floor(np.log2(t.astype(float))).astype(np.int64)


def _two_sample_p(a, b, discrete: bool) -> float:
    if discrete:
        return _pooled_chi2(np.asarray(a), np.asarray(b))
    return float(sps.ks_2samp(a, b).pvalue)


def _binned_joint(x, y, width, cap):
    bx = np.minimum(np.floor(np.abs(x) / width), cap).astype(np.int64)
    by = np.minimum(np.floor(np.abs(y) / width), cap).astype(np.int64)
    return bx * (cap + 1) + by


def _tv_codes(a, b, n_cells):
    pa = np.bincount(a, minlength=n_cells) / a.size
    pb = np.bincount(b, minlength=n_cells) / b.size
    return 0.5 * float(np.abs(pa - pb).sum())


@dataclass
class ReversalReport:
    """Outcome of the excursion time-reversal comparison.

    ``p_values`` keys: ``start``, ``undershoot``, ``time``, ``max``.  The
    joint statistic is the binned TV between ``(S_0, S_{T-1})`` and
    ``(-S_{T-1} - d, -S_0 - d)``; ``joint_null`` is the RMS of the same
    statistic over random relabellings of the pooled sample.
    """

    p_values: dict
    joint_tv: float
    joint_null: float
    level: float
    n: tuple[int, int]
    n_censored: int
    bin_width: float
    extra: dict = field(default_factory=dict)

    @property
    def marginals_pass(self) -> bool:
        return all(p >= self.level for p in self.p_values.values())

    @property
    def joint_pass(self) -> bool:
        return self.joint_tv <= 3.0 * self.joint_null

    @property
    def passed(self) -> bool:
        return self.marginals_pass and self.joint_pass


def time_reversal_check(
    spec: IncrementSpec,
    m: int,
    seed: int,
    *,
    level: float = 1e-3,
    bin_width: float = 0.25,
    cap: float = 4.0,
    n_null: int = N_BOOT,
    tag: int = 0,
    guard: int = 10**6,
) -> ReversalReport:
    """Check that the first excursion started from ``pi_plus`` reads the same backwards.

    One half of ``m`` replicas supplies the forward functionals, the other
    half the reflected ones (``y -> -y - d`` in reverse order), so each
    marginal comparison is a two-sample test between independent samples.
    """
    half = int(m) // 2
    if half < 100:
        raise InsufficientSamples("time_reversal_check needs m >= 200")
    d = spec.span_d
    runs = []
    n_cens = 0
    for k in range(2):
        g = RngStream(seed, ((int(tag) + k) << 32) + 0xFFFFFFFF).generator
        s0 = sample_measure(pi_plus(spec), g, half)
        b = cycle_batch(spec, s0, seed, guard=guard, tag=tag + k)
        keep = b.done
        n_cens += int((~keep).sum())
        runs.append((b.starts[keep], b.undershoots[keep], b.times[keep], b.path_max[keep], b.path_min[keep]))
    (s0a, ua, ta, mxa, _), (s0b, ub, tb, _, mnb) = runs
    discrete = spec.is_lattice
    p = {
        "start": _two_sample_p(s0a, -ub - d, discrete),
        "undershoot": _two_sample_p(ua, -s0b - d, discrete),
        "time": _pooled_chi2(_log_binned(ta), _log_binned(tb)),
        "max": _two_sample_p(mxa, -mnb - d, discrete),
    }
    c = int(round(cap / bin_width))
    fwd = _binned_joint(s0a, ua, bin_width, c)
    rev = _binned_joint(-ub - d, -s0b - d, bin_width, c)
    cells = (c + 1) ** 2
    tv = _tv_codes(fwd, rev, cells)
    pool = np.concatenate([fwd, rev])
    g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(tag) + 1299709,)))
    null = np.empty(n_null)
    for i in range(n_null):
        perm = g.permutation(pool)
        null[i] = _tv_codes(perm[: fwd.size], perm[fwd.size :], cells)
    rms = float(np.sqrt(np.mean(null**2)))
    return ReversalReport(p, tv, rms, level, (int(s0a.size), int(s0b.size)), n_cens, bin_width)


# ---------------------------------------------------------------------------
# one-step support
# ---------------------------------------------------------------------------


def support_coverage(
    spec: IncrementSpec,
    xs,
    m: int,
    seed: int,
    *,
    threshold: float = 0.01,
    width: float = 0.05,
    tag: int = 0,
    guard: int = DEFAULT_GUARD,
) -> dict[float, list]:
    """Heavy ``pi_plus`` atoms or bins missed by the one-step law from each probe.

    Returns ``{x: [missed atoms or bin left edges]}``; empty lists everywhere
    mean full coverage.  Censored replicas are dropped.
    """
    target = pi_plus(spec)
    if spec.is_lattice:
        heavy = [float(a) for a, p in zip(target.atoms, target.masses) if p >= threshold]
    else:
        top = float(target.quantile(0.999))
        edges = np.arange(0.0, top + width, width)
        masses = target.bin_masses(edges)
        heavy = [float(e) for e, p in zip(edges[:-1], masses) if p >= threshold]
    out = {}
    for i, x in enumerate(xs):
        b = chain_batch(spec, x, 1, seed, m=m, guard=guard, tag=tag + i)
        _, O, _ = b.completed()
        emp = EmpiricalDistribution.for_spec(spec, O[:, 0], width)
        out[float(x)] = [h for h in heavy if emp.prob_of(h) == 0]
    return out

"""Invariant laws of the overshoot, down-overshoot and entrance chains.

All three laws have densities against the Haar measure of the state group
(Lebesgue measure for continuous laws, ``d`` times counting measure on
``d * Z``) that are proportional to increment tails:

* ``pi_plus``:  ``c1 * P(X > y)``  on ``y >= 0``
* ``pi_minus``: ``c1 * P(X <= y)`` on ``y < 0``
* ``pi_h``:     ``c_h * (1 - P(y - h <= X <= y))`` on ``[0, h]``

with ``c1 = 2 / E|X|``.  Lattice measures are held as exact fractions.

The module also rebuilds ``pi_plus`` from ladder-height laws and measures how
well those laws satisfy the Wiener-Hopf factorisation of the increment law.
"""

from __future__ import annotations

import csv
import io
import math
import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import DegenerateInterval, TruncationTooSmall
from .increments import IncrementSpec, LatticePmf, _as_rng

__all__ = [
    "InvariantMeasure",
    "LadderLaws",
    "pi_plus",
    "pi_minus",
    "pi_h",
    "pi_plus_via_ladder",
    "wiener_hopf_residual",
    "ladder_normalization",
    "far_level_down_law",
    "far_level_up_law",
    "sample_measure",
]

_CDF_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class InvariantMeasure:
    """A normalised invariant law.

    For lattice specs ``atoms`` and ``masses`` list the support (natural
    units) and exact probabilities; ``density(y)`` is the density against
    the Haar measure, so an atom carries ``span_d * density``.
    """

    kind: str
    spec: IncrementSpec
    normalizer: float
    h: float | None = None
    atoms: tuple = ()
    masses: tuple = ()
    normalizer_exact: Fraction | None = None
    _lo: float = 0.0
    _hi: float = math.inf

    # -- description -------------------------------------------------------
    @property
    def is_lattice(self) -> bool:
        return self.spec.is_lattice

    @property
    def support(self) -> tuple[float, float]:
        """Closed hull of the support."""
        if self.is_lattice:
            return float(self.atoms[0]), float(self.atoms[-1])
        return self._lo, self._hi

    def pmf(self) -> dict[float, float]:
        if not self.is_lattice:
            raise TypeError("pmf() is only defined for lattice measures")
        return {float(a): float(p) for a, p in zip(self.atoms, self.masses)}

    def total_mass(self) -> float:
        if self.is_lattice:
            return float(sum(self.masses))
        return float(self.cdf(self._hi) - self.cdf(self._lo))

    # -- evaluation --------------------------------------------------------
    def density(self, y):
        y = np.asarray(y, dtype=float)
        spec = self.spec
        if self.kind == "pi_plus":
            out = np.where(y >= 0, self.normalizer * spec.tail_upper(y), 0.0)
        elif self.kind == "pi_minus":
            out = np.where(y < 0, self.normalizer * spec.tail_lower(y), 0.0)
        else:
            out = np.where((y >= 0) & (y <= self.h), self.normalizer * self._window_complement(y), 0.0)
        if self.is_lattice:
            d = spec.span_d
            on = np.abs(y / d - np.round(y / d)) < 1e-9
            out = np.where(on, out, 0.0)
        return out if out.ndim else float(out)

    def _window_complement(self, y):
        """``1 - P(y - h <= X <= y)``."""
        spec = self.spec
        if self.is_lattice:
            below = spec.tail_lower(y - self.h - spec.span_d)
        else:
            below = spec.tail_lower(y - self.h)
        return 1.0 - (spec.tail_lower(y) - below)

    def cdf(self, y):
        """``measure((-inf, y])``."""
        y = np.asarray(y, dtype=float)
        if self.is_lattice:
            a = np.array([float(v) for v in self.atoms])
            c = np.concatenate([[0.0], np.cumsum([float(p) for p in self.masses])])
            out = c[np.searchsorted(a, y + 1e-9 * self.spec.span_d, side="left")]
            return out if out.ndim else float(out)
        spec = self.spec
        if self.kind == "pi_plus":
            yc = np.clip(y, 0.0, None)
            out = np.where(y <= 0, 0.0, self.normalizer * spec.integral_tail_upper(0.0, yc))
        elif self.kind == "pi_minus":
            yc = np.clip(y, None, 0.0)
            out = np.where(y >= 0, 1.0, 1.0 - self.normalizer * spec.integral_tail_lower(yc, 0.0))
        else:
            h = self.h
            yc = np.clip(y, 0.0, h)
            part = yc - spec.integral_tail_lower(0.0, yc) + spec.integral_tail_lower(-h, yc - h)
            out = np.where(y <= 0, 0.0, np.where(y >= h, 1.0, self.normalizer * part))
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def bin_masses(self, edges) -> np.ndarray:
        """Masses of the half-open bins ``[edges[i], edges[i+1])``."""
        edges = np.asarray(edges, dtype=float)
        if self.is_lattice:
            a = np.array([float(v) for v in self.atoms])
            p = np.array([float(v) for v in self.masses])
            idx = np.searchsorted(edges, a, side="right") - 1
            out = np.zeros(len(edges) - 1)
            ok = (idx >= 0) & (idx < len(edges) - 1)
            np.add.at(out, idx[ok], p[ok])
            return out
        return np.diff(self.cdf(edges))

    def quantile(self, u):
        """Inverse cdf by safeguarded Newton steps (continuous) or search (lattice)."""
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        if self.is_lattice:
            a = np.array([float(v) for v in self.atoms])
            c = np.cumsum([float(p) for p in self.masses])
            c[-1] = 1.0
            out = a[np.minimum(np.searchsorted(c, u, side="left"), len(a) - 1)]
            return out if out.ndim else float(out)
        return _invert_cdf(self, u)

    def to_csv(self, target, grid=None) -> None:
        """Write ``y,density`` rows: one per atom, or on ``grid`` when continuous."""
        if self.is_lattice:
            ys = [float(a) for a in self.atoms]
        else:
            if grid is None:
                raise ValueError("a grid is required for continuous measures")
            ys = [float(v) for v in np.asarray(grid, dtype=float)]
        dens = np.atleast_1d(self.density(np.array(ys)))
        own = not isinstance(target, io.TextIOBase)
        fh = open(target, "w", newline="") if own else target
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "density"])
            for y, v in zip(ys, dens):
                w.writerow([format(y, ".17g"), format(float(v), ".17g")])
        finally:
            if own:
                fh.close()


def _invert_cdf(measure: InvariantMeasure, u: np.ndarray):
    """Vectorised bracketed Newton iteration to absolute cdf tolerance 1e-10."""
    shape = u.shape
    u = u.ravel().copy()
    lo_b, hi_b = measure.support
    edge_lo = u <= 0.0
    edge_hi = u >= 1.0
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    if measure.kind == "pi_minus":
        hi = np.zeros_like(u)
        lo = np.full_like(u, -1.0)
        while True:
            bad = measure.cdf(lo) > u
            if not bad.any():
                break
            lo[bad] *= 2.0
    elif measure.kind == "pi_plus":
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        while True:
            bad = measure.cdf(hi) < u
            if not bad.any():
                break
            hi[bad] *= 2.0
    else:
        lo = np.zeros_like(u)
        hi = np.full_like(u, float(measure.h))
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = measure.cdf(x) - u
        done = np.abs(f) <= _CDF_TOL
        if done.all():
            break
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        dens = np.asarray(measure.density(x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - f / dens
        inside = np.isfinite(nx) & (nx > lo) & (nx < hi)
        nx = np.where(inside, nx, 0.5 * (lo + hi))
        x = np.where(done, x, nx)
        if np.all(done | (hi - lo <= 1e-15 * np.maximum(1.0, np.abs(x)))):
            break
    x = np.where(edge_lo, lo_b, np.where(edge_hi, hi_b, x))
    return x.reshape(shape) if shape else float(x[0])


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _lattice_measure(kind, spec: LatticePmf, atoms_units, weights, h=None):
    total = sum(weights)
    if total <= 0:
        raise DegenerateInterval("the invariant density vanishes on the whole state space")
    d = spec.span
    # weights are tail values, masses are d * c * tail with d * c * sum = 1
    norm = 1 / (d * total)
    atoms = tuple(u * d for u, w in zip(atoms_units, weights) if w > 0)
    masses = tuple(w / total for w in weights if w > 0)
    return InvariantMeasure(kind, spec, float(norm), h, atoms, masses, norm)


def pi_plus(spec: IncrementSpec) -> InvariantMeasure:
    """Invariant law of the overshoot chain; ``c1 = 2 / E|X|``."""
    if isinstance(spec, LatticePmf):
        top = spec.units[-1]
        units = list(range(0, top))
        w = [spec.tail_upper_exact(u * spec.span) for u in units]
        m = _lattice_measure("pi_plus", spec, units, w)
        # normaliser equals 2 / E|X| exactly; kept from the construction
        return m
    c1 = 2.0 / spec.mean_abs()
    return InvariantMeasure("pi_plus", spec, c1, _lo=0.0, _hi=spec.m_plus)


def pi_minus(spec: IncrementSpec) -> InvariantMeasure:
    """Invariant law of the down-overshoot chain."""
    if isinstance(spec, LatticePmf):
        bottom = spec.units[0]
        units = list(range(bottom, 0))
        w = [spec.tail_lower_exact(u * spec.span) for u in units]
        return _lattice_measure("pi_minus", spec, units, w)
    c1 = 2.0 / spec.mean_abs()
    return InvariantMeasure("pi_minus", spec, c1, _lo=spec.m_minus, _hi=0.0)


def pi_h(spec: IncrementSpec, h: float) -> InvariantMeasure:
    """Invariant law of the chain of entrances into ``[0, h]``."""
    if not (isinstance(h, numbers.Real) and math.isfinite(h) and h > 0):
        raise ValueError("h must be positive and finite")
    if isinstance(spec, LatticePmf):
        if isinstance(h, (int, np.integer, Fraction)):
            hq = Fraction(h)
        else:
            hq = Fraction(repr(float(h)))
        hu = hq / spec.span
        if hu.denominator != 1:
            raise ValueError(f"h must be a multiple of the span {spec.span}")
        hu = hu.numerator
        d = spec.span
        units = list(range(0, hu + 1))
        w = []
        for u in units:
            y = u * d
            inside = spec.tail_lower_exact(y) - spec.tail_lower_exact(y - hq - d)
            w.append(1 - inside)
        return _lattice_measure("pi_h", spec, units, w, h=float(h))
    h = float(h)
    # int_0^h (1 - F(y) + F(y - h)) dy in closed form
    mass = h - float(spec.integral_tail_lower(0.0, h)) + float(spec.integral_tail_lower(-h, 0.0))
    if not mass > 0:
        raise DegenerateInterval("entrance density vanishes on [0, h]")
    return InvariantMeasure("pi_h", spec, 1.0 / mass, h=h, _lo=0.0, _hi=h)


def sample_measure(measure: InvariantMeasure, rng, n: int) -> np.ndarray:
    """``n`` i.i.d. draws by inverse cdf (exact atoms on lattices)."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    g = _as_rng(rng)
    if n == 0:
        return np.empty(0)
    u = g.random(n)
    if measure.is_lattice:
        d = measure.spec.span
        units = np.array([int(a / d) for a in measure.atoms], dtype=np.int64)
        c = np.cumsum([float(p) for p in measure.masses])
        c[-1] = 1.0
        idx = np.minimum(np.searchsorted(c, u, side="right"), len(c) - 1)
        return units[idx] * measure.spec.span_d
    return np.asarray(_invert_cdf(measure, u))


# ---------------------------------------------------------------------------
# ladder-height representation
# ---------------------------------------------------------------------------


@dataclass
class LadderLaws:
    """Laws of ``H+``, ``H-`` and the weak ``H-`` on a lattice, keyed by units of ``d``."""

    span: float
    h_plus: dict = field(default_factory=dict)
    h_minus: dict = field(default_factory=dict)
    h_tilde_minus: dict = field(default_factory=dict)
    n: int = 0

    @classmethod
    def from_samples(cls, spec: IncrementSpec, h_plus, h_minus, h_tilde_minus) -> "LadderLaws":
        if not spec.is_lattice:
            raise ValueError("ladder-law constructions are implemented for lattice specs only")
        arrs = [np.asarray(a, dtype=float) for a in (h_plus, h_minus, h_tilde_minus)]
        if any(a.size == 0 for a in arrs):
            raise ValueError("ladder samples must be non-empty")
        d = spec.span_d
        laws = []
        for a in arrs:
            u, c = np.unique(np.round(a / d).astype(np.int64), return_counts=True)
            laws.append({int(k): v / a.size for k, v in zip(u, c)})
        return cls(d, *laws, n=int(min(a.size for a in arrs)))

    @classmethod
    def from_batch(cls, spec: IncrementSpec, batch) -> "LadderLaws":
        d = batch.done
        return cls.from_samples(spec, batch.h_plus[d], batch.h_minus[d], batch.h_tilde_minus[d])

    def check(self):
        if not (self.h_plus and self.h_minus and self.h_tilde_minus):
            raise ValueError("ladder laws must be non-empty")
        if min(self.h_plus) <= 0 or max(self.h_minus) >= 0 or max(self.h_tilde_minus) > 0:
            raise ValueError("ladder laws violate their sign constraints")


def _as_array(law: Mapping[int, float]):
    lo = min(law)
    hi = max(law)
    arr = np.zeros(hi - lo + 1)
    for k, v in law.items():
        arr[k - lo] += v
    return lo, arr


def _ladder_input(spec, ladders) -> LadderLaws:
    if isinstance(ladders, LadderLaws):
        laws = ladders
    elif hasattr(ladders, "h_tilde_minus") and hasattr(ladders, "done"):
        laws = LadderLaws.from_batch(spec, ladders)
    else:
        ladders = list(ladders)
        if not ladders:
            raise ValueError("ladder samples must be non-empty")
        laws = LadderLaws.from_samples(
            spec, [s.h_plus for s in ladders], [s.h_minus for s in ladders], [s.h_tilde_minus for s in ladders]
        )
    laws.check()
    if not spec.is_lattice:
        raise ValueError("ladder-law constructions are implemented for lattice specs only")
    return laws


def _below_cdf(lo: int, law: np.ndarray) -> np.ndarray:
    """``P(H <= u)`` for ``u = lo, ..., -1`` given a law on negative units."""
    g = np.ones(-lo)
    g[: law.size] = np.cumsum(law)
    return g


def _default_window(masses: np.ndarray) -> int:
    """Length covering 99.99% of the mass, doubled."""
    c = np.cumsum(masses) / masses.sum()
    q = int(np.searchsorted(c, 0.9999))
    return 2 * (q + 1)


def pi_plus_via_ladder(ladders, spec: IncrementSpec, window: int | None = None) -> dict[float, float]:
    """Lattice ``pi_plus`` rebuilt from ladder laws.

    Returns ``c1 * P(weak H- != 0) * ([P(H- <= x) lambda_d^-] * law(H+))``
    restricted to ``y >= 0``, as a map ``atom -> mass``.  ``window`` is the
    number of atoms kept, starting at 0; ``TruncationTooSmall`` is raised if
    it drops 0.1% of the mass or more.
    """
    laws = _ladder_input(spec, ladders)
    d = spec.span_d
    c1 = 2.0 / spec.mean_abs()
    p_nonzero = 1.0 - laws.h_tilde_minus.get(0, 0.0)
    lo_m, hm = _as_array(laws.h_minus)
    # g(u) = P(H- <= u) on u = lo_m .. -1
    g = _below_cdf(lo_m, hm)
    lo_p, hp = _as_array(laws.h_plus)
    conv = np.convolve(g, hp)
    start = lo_m + lo_p  # unit of conv[0]
    dens = c1 * p_nonzero * conv
    ys = start + np.arange(conv.size)
    keep = ys >= 0
    ys, dens = ys[keep], dens[keep]
    masses = d * dens
    if masses.size == 0 or masses.sum() <= 0:
        raise TruncationTooSmall("ladder convolution has no mass on the nonnegative lattice")
    if window is None:
        window = _default_window(masses)
    window = int(window)
    if window < 1:
        raise ValueError("window must hold at least one atom")
    inside = ys < window
    lost = masses[~inside].sum() / masses.sum()
    if lost >= 1e-3:
        raise TruncationTooSmall(f"{lost:.3%} of the convolution mass lies outside the window")
    return {float(y * d): float(m) for y, m in zip(ys[inside], masses[inside])}


def wiener_hopf_residual(ladders, spec: IncrementSpec, window: tuple[int, int] | None = None) -> float:
    """TV distance between the increment law and its ladder factorisation.

    Compares ``P(X = .)`` with ``P(H+ = .) + P(weak H- = .) - (P(H+) * P(weak H-))(.)``
    over the atoms ``window = (lo, hi)`` (units of ``d``, inclusive).
    """
    laws = _ladder_input(spec, ladders)
    lo_p, hp = _as_array(laws.h_plus)
    lo_t, ht = _as_array(laws.h_tilde_minus)
    conv = np.convolve(hp, ht)
    lo_c = lo_p + lo_t
    units = spec.units
    probs = [float(p) for p in spec.probs]
    lo = min(lo_c, lo_t, units[0])
    hi = max(lo_c + conv.size - 1, lo_p + hp.size - 1, units[-1], 0)
    n = hi - lo + 1
    fact = np.zeros(n)
    fact[lo_p - lo : lo_p - lo + hp.size] += hp
    fact[lo_t - lo : lo_t - lo + ht.size] += ht
    fact[lo_c - lo : lo_c - lo + conv.size] -= conv
    target = np.zeros(n)
    for u, p in zip(units, probs):
        target[u - lo] += p
    if window is not None:
        wl, wh = int(window[0]), int(window[1])
        if wl > wh:
            raise ValueError("window must satisfy lo <= hi")
        ys = np.arange(lo, hi + 1)
        inside = (ys >= wl) & (ys <= wh)
        for name, arr in (("increment", target), ("factorised", fact)):
            total = np.abs(arr).sum()
            if total > 0 and np.abs(arr[~inside]).sum() / total >= 1e-3:
                raise TruncationTooSmall(f"window drops 0.1% or more of the {name} mass")
        fact, target = fact[inside], target[inside]
    return float(0.5 * np.abs(fact - target).sum())


def far_level_down_law(ladders, spec: IncrementSpec) -> dict[float, float]:
    """Limit law of the first down-overshoot from a remote level.

    ``(1 / -E H-) * P(H- <= y) * lambda_d`` on ``y < 0``.
    """
    laws = _ladder_input(spec, ladders)
    d = spec.span_d
    mean_hm = sum(k * v for k, v in laws.h_minus.items()) * d
    lo, hm = _as_array(laws.h_minus)
    g = _below_cdf(lo, hm)
    ys = lo + np.arange(g.size)
    return {float(y * d): float(d * v / -mean_hm) for y, v in zip(ys, g) if v > 0}


def far_level_up_law(ladders, spec: IncrementSpec) -> dict[float, float]:
    """Limit law of the first overshoot from a remote negative level.

    ``(1 / E H+) * P(H+ > y) * lambda_d`` on ``y >= 0``.
    """
    laws = _ladder_input(spec, ladders)
    d = spec.span_d
    mean_hp = sum(k * v for k, v in laws.h_plus.items()) * d
    lo, hp = _as_array(laws.h_plus)
    top = lo + hp.size - 1
    out = {}
    for y in range(0, top):
        tail = sum(v for k, v in laws.h_plus.items() if k > y)
        if tail > 0:
            out[float(y * d)] = float(d * tail / mean_hp)
    return out


def ladder_normalization(ladders, spec: IncrementSpec) -> tuple[float, float]:
    """Both sides of ``P(R- + H+ >= 0) = -1 / (c1 * E[weak H-])``.

    ``R-`` follows :func:`far_level_down_law` independently of ``H+``.
    """
    laws = _ladder_input(spec, ladders)
    d = spec.span_d
    r = far_level_down_law(laws, spec)
    lhs = 0.0
    for y, p in r.items():
        yu = round(y / d)
        lhs += p * sum(v for k, v in laws.h_plus.items() if k + yu >= 0)
    c1 = 2.0 / spec.mean_abs()
    mean_ht = sum(k * v for k, v in laws.h_tilde_minus.items()) * d
    rhs = -1.0 / (c1 * mean_ht) if mean_ht < 0 else math.inf
    return float(lhs), float(rhs)

"""Zero-mean increment laws and reproducible random streams.

Four built-in families are supported:

* :class:`LatticePmf` -- finitely supported law on ``d * Z`` (arithmetic, span ``d > 0``)
* :class:`Laplace` -- density ``exp(-|x|/b) / (2b)``
* :class:`GaussMix` -- finite mixture of normals with zero overall mean
* :class:`SymmetricPareto` -- ``P(X > x) = P(X < -x) = (1 + x)**(-alpha) / 2``

Every family has closed-form tails, since the invariant laws built on top of
them are expressed through ``P(X > x)`` and ``P(X <= x)``.  Lattice laws keep
their atoms and probabilities as :class:`fractions.Fraction` so that identities
such as detailed balance can be checked in exact arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr

from .errors import InvalidSpec

__all__ = [
    "RngStream",
    "IncrementSpec",
    "LatticePmf",
    "Laplace",
    "GaussMix",
    "SymmetricPareto",
    "mean_abs",
    "tail_upper",
    "tail_lower",
    "sample",
    "spec_to_json",
    "spec_from_json",
]

_TOL = 1e-12

# family codes understood by the compiled walk engine
KIND_LATTICE = 0
KIND_LAPLACE = 1
KIND_GAUSSMIX = 2
KIND_PARETO = 3

# largest block table (entries) kept for lattice block stepping
_BLOCK_TABLE_LIMIT = 1 << 20


class RngStream:
    """A seeded random stream identified by ``(seed, stream_id)``.

    Streams with the same pair replay the same sequence; distinct
    ``stream_id`` values give independent streams (``SeedSequence`` spawn
    keys).  A stream is meant to be owned by a single worker.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, (float, np.floating)):
        # decimal reading of the float, i.e. 0.1 -> 1/10
        return Fraction(repr(float(v)))
    raise InvalidSpec(f"cannot read {v!r} as an exact number")


def _frac_str(q: Fraction) -> str:
    """Exact decimal string when one exists, else ``p/q``."""
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    digits = max(twos, fives)
    scaled = q * 10**digits
    s = str(abs(scaled.numerator))
    sign = "-" if q < 0 else ""
    if digits == 0:
        return sign + s
    s = s.rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def _frac_gcd(values: Iterable[Fraction]) -> Fraction:
    vals = [abs(v) for v in values if v != 0]
    lcm_den = 1
    for v in vals:
        lcm_den = lcm_den * v.denominator // math.gcd(lcm_den, v.denominator)
    g = 0
    for v in vals:
        g = math.gcd(g, int(v * lcm_den))
    return Fraction(g, lcm_den)


class IncrementSpec:
    """Common interface of the increment families.

    Subclasses are frozen dataclasses; instances are immutable and may be
    shared between threads.
    """

    family: str = ""

    # -- structural attributes -------------------------------------------
    @property
    def span_d(self) -> float:
        return 0.0

    @property
    def is_lattice(self) -> bool:
        return self.span_d > 0

    @property
    def m_plus(self) -> float:
        """``sup supp X``."""
        return math.inf

    @property
    def m_minus(self) -> float:
        """``inf supp X``."""
        return -math.inf

    @property
    def finite_variance(self) -> bool:
        return True

    # -- law ---------------------------------------------------------------
    def mean_abs(self) -> float:
        raise NotImplementedError

    def tail_upper(self, x):
        """``P(X > x)``, vectorised over ``x``."""
        raise NotImplementedError

    def tail_lower(self, x):
        """``P(X <= x)``, vectorised over ``x``."""
        return 1.0 - self.tail_upper(x)

    def integral_tail_upper(self, a, b):
        """``int_a^b P(X > t) dt`` for continuous families."""
        return self._tail_antiderivative(b) - self._tail_antiderivative(a)

    def integral_tail_lower(self, a, b):
        """``int_a^b P(X <= t) dt`` for continuous families."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return (b - a) - self.integral_tail_upper(a, b)

    def _tail_antiderivative(self, t):
        raise NotImplementedError

    # -- engine plumbing ---------------------------------------------------
    def engine_args(self):
        """Tuple consumed by the compiled walk kernels."""
        raise NotImplementedError

    def to_units(self, x) -> float:
        """Position in engine units (multiples of the span on lattices)."""
        return float(x)

    def from_units(self, u):
        return np.asarray(u, dtype=float)

    def to_json(self) -> dict:
        raise NotImplementedError

    def sample(self, rng, n: int) -> np.ndarray:
        return sample(self, rng, n)


# ---------------------------------------------------------------------------
# Lattice
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticePmf(IncrementSpec):
    """Finitely supported zero-mean law on the lattice ``span_d * Z``.

    ``support`` and ``probs`` accept ints, decimal strings (``"0.25"``),
    ratio strings (``"1/3"``) or Fractions; floats are read through their
    shortest decimal representation.  The span defaults to the gcd of the
    atoms and, when given, must equal it.
    """

    support: tuple
    probs: tuple
    span: Fraction | None = None
    family: str = field(default="LatticePmf", init=False, repr=False)

    def __post_init__(self):
        sup = [_frac(v) for v in self.support]
        pr = [_frac(p) for p in self.probs]
        if len(sup) != len(pr) or not sup:
            raise InvalidSpec("support and probs must be non-empty and of equal length")
        if any(p < 0 for p in pr):
            raise InvalidSpec("probabilities must be nonnegative")
        total = sum(pr)
        if abs(total - 1) > _TOL:
            raise InvalidSpec(f"probabilities sum to {float(total)!r}, not 1")
        merged: dict[Fraction, Fraction] = {}
        for v, p in zip(sup, pr):
            if p > 0:
                merged[v] = merged.get(v, Fraction(0)) + p / total
        atoms = sorted(merged)
        ps = [merged[a] for a in atoms]
        mean = sum(a * p for a, p in zip(atoms, ps))
        if abs(mean) > _TOL:
            raise InvalidSpec(f"mean is {float(mean)!r}, not 0")
        if all(a == 0 for a in atoms):
            raise InvalidSpec("degenerate law: E|X| = 0")
        d = _frac_gcd(atoms)
        if self.span is not None:
            given = _frac(self.span)
            if given != d:
                raise InvalidSpec(f"declared span {given} differs from the lattice span {d} of the support")
        object.__setattr__(self, "support", tuple(atoms))
        object.__setattr__(self, "probs", tuple(ps))
        object.__setattr__(self, "span", d)

    # exact views
    @property
    def span_d(self) -> float:
        return float(self.span)

    @cached_property
    def units(self) -> tuple:
        """Atoms in units of the span, as Python ints."""
        return tuple(int(a / self.span) for a in self.support)

    @property
    def m_plus(self) -> float:
        return float(self.support[-1])

    @property
    def m_minus(self) -> float:
        return float(self.support[0])

    def mean_abs_exact(self) -> Fraction:
        return sum(abs(a) * p for a, p in zip(self.support, self.probs))

    def mean_abs(self) -> float:
        return float(self.mean_abs_exact())

    def pmf_exact(self, x) -> Fraction:
        x = _frac(x)
        for a, p in zip(self.support, self.probs):
            if a == x:
                return p
        return Fraction(0)

    def tail_upper_exact(self, x) -> Fraction:
        x = _frac(x)
        return sum((p for a, p in zip(self.support, self.probs) if a > x), Fraction(0))

    def tail_lower_exact(self, x) -> Fraction:
        x = _frac(x)
        return sum((p for a, p in zip(self.support, self.probs) if a <= x), Fraction(0))

    @cached_property
    def _float_arrays(self):
        return (np.array([float(a) for a in self.support]), np.array([float(p) for p in self.probs]))

    def tail_upper(self, x):
        a, p = self._float_arrays
        x = np.asarray(x, dtype=float)
        # exact on atoms: compare in units to dodge float rounding of x
        cdf = np.concatenate([[0.0], np.cumsum(p)])
        idx = np.searchsorted(a, x + 1e-9 * self.span_d, side="left")
        out = 1.0 - cdf[idx]
        return np.clip(out, 0.0, 1.0) if out.ndim else float(min(max(out, 0.0), 1.0))

    def tail_lower(self, x):
        return 1.0 - self.tail_upper(x)

    def variance(self) -> float:
        return float(sum(a * a * p for a, p in zip(self.support, self.probs)))

    @cached_property
    def _engine(self):
        units = np.array(self.units, dtype=np.int64)
        probs = np.array([float(p) for p in self.probs])
        icdf = np.cumsum(probs)
        icdf[-1] = 1.0
        ivals = units.astype(np.float64)
        jdown = float(max(0, -units.min()))
        jup = float(max(0, units.max()))
        boff, blo, bcdf, bguide = _block_tables(units, probs)
        return (
            KIND_LATTICE,
            np.zeros(1),
            ivals,
            icdf,
            boff,
            blo,
            bcdf,
            bguide,
            jdown,
            jup,
        )

    def engine_args(self):
        return self._engine

    def to_units(self, x) -> float:
        q = _frac(x) / self.span
        if q.denominator != 1:
            raise ValueError(f"starting point {x} is not on the lattice {self.span}Z")
        return float(q.numerator)

    def from_units(self, u):
        return np.asarray(u, dtype=float) * self.span_d

    def to_json(self) -> dict:
        return {
            "family": "LatticePmf",
            "support": [_frac_str(a) for a in self.support],
            "probs": [_frac_str(p) for p in self.probs],
            "span_d": _frac_str(self.span),
        }


def _block_tables(units: np.ndarray, probs: np.ndarray):
    """Laws of ``S_k`` for ``k = 2**j`` used to skip crossing-free stretches.

    Table ``j`` lives in ``bcdf[boff[j]:boff[j+1]]`` as a cumulative
    distribution over the integers ``blo[j], blo[j] + 1, ...``, with a guide
    table of the same length for O(1) expected inversion.  Entry 0 is the
    one-step law.  Laws are built by repeated FFT squaring; values below
    1e-300 are clipped and each table is renormalised.
    """
    lo = int(units.min())
    hi = int(units.max())
    base = np.zeros(hi - lo + 1)
    for u, p in zip(units, probs):
        base[int(u) - lo] += p
    tables = [base]
    los = [lo]
    width = hi - lo
    j = 0
    while width > 0 and width * (2 ** (j + 1)) + 1 <= _BLOCK_TABLE_LIMIT:
        nxt = fftconvolve(tables[-1], tables[-1])
        nxt[nxt < 1e-300] = 0.0
        nxt /= nxt.sum()
        tables.append(nxt)
        los.append(2 * los[-1])
        j += 1
    offs = np.zeros(len(tables) + 1, dtype=np.int64)
    for i, t in enumerate(tables):
        offs[i + 1] = offs[i] + len(t)
    flat = np.empty(offs[-1])
    guide = np.empty(offs[-1], dtype=np.int64)
    for i, t in enumerate(tables):
        c = np.cumsum(t)
        c[-1] = 1.0
        flat[offs[i] : offs[i + 1]] = c
        # guide table: first candidate index for u in [k/len, (k+1)/len)
        g = np.searchsorted(c, np.arange(len(c)) / len(c), side="right")
        guide[offs[i] : offs[i + 1]] = offs[i] + np.minimum(g, len(c) - 1)
    return offs, np.array(los, dtype=np.float64), flat, guide


# ---------------------------------------------------------------------------
# Continuous families
# ---------------------------------------------------------------------------

_EMPTY_I = np.zeros(1, dtype=np.int64)
_EMPTY_F = np.zeros(1)


def _continuous_engine(kind, fpar):
    f = np.asarray(fpar, dtype=np.float64)
    return (kind, f, _EMPTY_F, _EMPTY_F, _EMPTY_I, _EMPTY_F, _EMPTY_F, _EMPTY_I, 0.0, 0.0)


@dataclass(frozen=True)
class Laplace(IncrementSpec):
    """Laplace law with scale ``b``; its overshoot law is ``Exp(1/b)``."""

    b: float = 1.0
    family: str = field(default="Laplace", init=False, repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise InvalidSpec("Laplace scale b must be positive and finite")
        object.__setattr__(self, "b", float(self.b))

    def mean_abs(self) -> float:
        return self.b

    def variance(self) -> float:
        return 2.0 * self.b**2

    def tail_upper(self, x):
        x = np.asarray(x, dtype=float)
        b = self.b
        out = np.where(x >= 0, 0.5 * np.exp(-np.abs(x) / b), 1.0 - 0.5 * np.exp(-np.abs(x) / b))
        return out if out.ndim else float(out)

    def _tail_antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        b = self.b
        return np.where(t >= 0, -0.5 * b * np.exp(-np.abs(t) / b), t - 0.5 * b * np.exp(-np.abs(t) / b))

    def engine_args(self):
        return _continuous_engine(KIND_LAPLACE, [self.b])

    def to_json(self) -> dict:
        return {"family": "Laplace", "b": self.b}


@dataclass(frozen=True)
class GaussMix(IncrementSpec):
    """Mixture of normals given as ``(weight, mean, stddev)`` triples."""

    components: tuple
    family: str = field(default="GaussMix", init=False, repr=False)

    def __post_init__(self):
        comps = tuple((float(w), float(m), float(s)) for w, m, s in self.components)
        if not comps:
            raise InvalidSpec("GaussMix needs at least one component")
        if any(w < 0 for w, _, _ in comps) or any(not s > 0 for _, _, s in comps):
            raise InvalidSpec("weights must be nonnegative and stddevs positive")
        if abs(sum(w for w, _, _ in comps) - 1.0) > _TOL:
            raise InvalidSpec("mixture weights must sum to 1")
        if abs(sum(w * m for w, m, _ in comps)) > _TOL:
            raise InvalidSpec("mixture mean must be 0")
        object.__setattr__(self, "components", comps)

    @cached_property
    def _arrays(self):
        c = np.array(self.components)
        return c[:, 0], c[:, 1], c[:, 2]

    def mean_abs(self) -> float:
        w, m, s = self._arrays
        e = s * math.sqrt(2.0 / math.pi) * np.exp(-(m**2) / (2 * s**2)) + m * (1.0 - 2.0 * ndtr(-m / s))
        return float(np.dot(w, e))

    def variance(self) -> float:
        w, m, s = self._arrays
        return float(np.dot(w, m**2 + s**2))

    def tail_upper(self, x):
        x = np.asarray(x, dtype=float)
        w, m, s = self._arrays
        z = (x[..., None] - m) / s
        out = np.sum(w * ndtr(-z), axis=-1)
        return out if out.ndim else float(out)

    def _tail_antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        w, m, s = self._arrays
        z = (t[..., None] - m) / s
        f = z * ndtr(-z) - np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
        return np.sum(w * s * f, axis=-1)

    def engine_args(self):
        w, m, s = self._arrays
        cw = np.cumsum(w)
        cw[-1] = 1.0
        return _continuous_engine(KIND_GAUSSMIX, np.concatenate([[len(w)], cw, m, s]))

    def to_json(self) -> dict:
        return {"family": "GaussMix", "components": [list(c) for c in self.components]}


@dataclass(frozen=True)
class SymmetricPareto(IncrementSpec):
    """Symmetric law with ``P(X > x) = (1 + x)**(-alpha) / 2`` for ``x >= 0``.

    It lies in the domain of attraction of a symmetric ``alpha``-stable law
    (skewness 0, positivity parameter 1/2).
    """

    alpha: float = 1.5
    family: str = field(default="SymmetricPareto", init=False, repr=False)

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise InvalidSpec("SymmetricPareto needs 1 < alpha < 2")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def finite_variance(self) -> bool:
        return False

    @property
    def beta(self) -> float:
        return 0.0

    @property
    def positivity(self) -> float:
        return 0.5 + math.atan(self.beta * math.tan(math.pi * self.alpha / 2)) / (math.pi * self.alpha)

    def mean_abs(self) -> float:
        return 1.0 / (self.alpha - 1.0)

    def tail_upper(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        out = np.where(x >= 0, 0.5 * (1.0 + np.abs(x)) ** (-a), 1.0 - 0.5 * (1.0 + np.abs(x)) ** (-a))
        return out if out.ndim else float(out)

    def _tail_antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        k = 1.0 / (2.0 * (a - 1.0))
        return np.where(t >= 0, -k * (1.0 + np.abs(t)) ** (1 - a), t - k * (1.0 + np.abs(t)) ** (1 - a))

    def engine_args(self):
        return _continuous_engine(KIND_PARETO, [1.0 / self.alpha])

    def to_json(self) -> dict:
        return {"family": "SymmetricPareto", "alpha": self.alpha}


# ---------------------------------------------------------------------------
# Functional API
# ---------------------------------------------------------------------------


def mean_abs(spec: IncrementSpec) -> float:
    """``E|X_1|`` in closed form."""
    return spec.mean_abs()


def tail_upper(spec: IncrementSpec, x):
    return spec.tail_upper(x)


def tail_lower(spec: IncrementSpec, x):
    return spec.tail_lower(x)


def sample(spec: IncrementSpec, rng, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. increments; lattice draws are exact multiples of the span."""
    from . import _engine

    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = np.empty(n)
    if n:
        _engine.draw_many(_as_rng(rng), spec.engine_args(), out)
    return spec.from_units(out)


def spec_to_json(spec: IncrementSpec) -> dict:
    return spec.to_json()


def spec_from_json(obj) -> IncrementSpec:
    """Build a spec from its JSON object (or a JSON string)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or "family" not in obj:
        raise InvalidSpec("spec JSON must be an object with a 'family' key")
    fam = obj["family"]
    try:
        if fam == "LatticePmf":
            return LatticePmf(tuple(obj["support"]), tuple(obj["probs"]), obj.get("span_d"))
        if fam == "Laplace":
            return Laplace(float(obj.get("b", 1.0)))
        if fam == "GaussMix":
            return GaussMix(tuple(tuple(c) for c in obj["components"]))
        if fam == "SymmetricPareto":
            return SymmetricPareto(float(obj["alpha"]))
    except (KeyError, TypeError) as exc:
        raise InvalidSpec(f"malformed {fam} spec: {exc}") from exc
    raise InvalidSpec(f"unknown family {fam!r}")

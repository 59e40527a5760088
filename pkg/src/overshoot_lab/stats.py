"""Empirical laws, distances and convergence diagnostics.

Distances accept :class:`EmpiricalDistribution`, :class:`InvariantMeasure`
or a plain ``{atom: probability}`` mapping (read as a lattice pmf).  Binned
distances are lower bounds on the distance between the underlying laws.

The decay-rate and drift fits are also available as scikit-learn style
estimators (:class:`GeometricRate`, :class:`DriftRegressor`).
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import HeavyTailVariance, InsufficientSamples, ModeMismatch, NoiseFloor
from .increments import IncrementSpec, _as_rng
from .measures import InvariantMeasure

__all__ = [
    "EmpiricalDistribution",
    "RateFit",
    "DriftFit",
    "GeometricRate",
    "DriftRegressor",
    "tv_distance",
    "ks_distance",
    "v_gamma_distance",
    "geometric_rate_fit",
    "drift_fit",
    "drift_limit",
    "bootstrap_se",
    "multinomial_tv_se",
    "config_hash",
    "make_report",
]

DEFAULT_BIN_WIDTH = 0.05
N_BOOT = 200


# ---------------------------------------------------------------------------
# empirical laws
# ---------------------------------------------------------------------------


class EmpiricalDistribution:
    """Counts on lattice atoms ``k * span`` or on bins ``[k w, (k+1) w)``.

    Keys are the integers ``k``.  Two distributions merge (and compare) only
    when they share mode and geometry.
    """

    def __init__(self, mode: str = "lattice", *, span: float | None = None, width: float | None = None):
        if mode == "lattice":
            if span is None or not span > 0:
                raise ValueError("lattice mode needs a positive span")
            self.step = float(span)
        elif mode == "binned":
            width = DEFAULT_BIN_WIDTH if width is None else width
            if not width > 0:
                raise ValueError("bin width must be positive")
            self.step = float(width)
        else:
            raise ValueError("mode must be 'lattice' or 'binned'")
        self.mode = mode
        self.counts: dict[int, int] = {}
        self.n = 0

    @classmethod
    def from_samples(cls, samples, *, span: float | None = None, width: float | None = None) -> "EmpiricalDistribution":
        """Lattice mode when ``span`` is given, binned mode otherwise."""
        if span is not None:
            out = cls("lattice", span=span)
        else:
            out = cls("binned", width=width)
        return out.add(samples)

    @classmethod
    def for_spec(cls, spec: IncrementSpec, samples, width: float | None = None) -> "EmpiricalDistribution":
        if spec.is_lattice:
            return cls.from_samples(samples, span=spec.span_d)
        return cls.from_samples(samples, width=width)

    def _keys(self, samples: np.ndarray) -> np.ndarray:
        if self.mode == "lattice":
            u = samples / self.step
            k = np.round(u)
            if np.any(np.abs(u - k) > 1e-9 * np.maximum(1.0, np.abs(u))):
                raise ValueError("lattice samples must be multiples of the span")
            return k.astype(np.int64)
        return np.floor(samples / self.step + 1e-12).astype(np.int64)

    def add(self, samples) -> "EmpiricalDistribution":
        x = np.asarray(samples, dtype=float).ravel()
        if x.size:
            if not np.all(np.isfinite(x)):
                raise ValueError("samples must be finite")
            keys, cnt = np.unique(self._keys(x), return_counts=True)
            for k, c in zip(keys.tolist(), cnt.tolist()):
                self.counts[k] = self.counts.get(k, 0) + c
            self.n += int(x.size)
        return self

    def same_geometry(self, other: "EmpiricalDistribution") -> bool:
        return self.mode == other.mode and math.isclose(self.step, other.step, rel_tol=1e-12)

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        if not self.same_geometry(other):
            raise ModeMismatch("cannot merge distributions with different geometry")
        out = EmpiricalDistribution(self.mode, span=self.step, width=self.step) if self.mode == "binned" else EmpiricalDistribution("lattice", span=self.step)
        for src in (self, other):
            for k, c in src.counts.items():
                out.counts[k] = out.counts.get(k, 0) + c
        out.n = self.n + other.n
        return out

    def keys(self) -> np.ndarray:
        return np.array(sorted(self.counts), dtype=np.int64)

    def values(self) -> np.ndarray:
        """Atom positions (lattice) or left bin edges (binned)."""
        return self.keys() * self.step

    def count_array(self) -> np.ndarray:
        return np.array([self.counts[k] for k in sorted(self.counts)], dtype=np.int64)

    def probs(self) -> dict[float, float]:
        if self.n == 0:
            return {}
        return {float(k * self.step): c / self.n for k, c in sorted(self.counts.items())}

    def prob_of(self, value: float) -> float:
        if self.n == 0:
            return 0.0
        k = int(self._keys(np.array([float(value)]))[0])
        return self.counts.get(k, 0) / self.n

    def __repr__(self):
        return f"EmpiricalDistribution(mode={self.mode!r}, step={self.step}, n={self.n}, keys={len(self.counts)})"


# ---------------------------------------------------------------------------
# aligned probability vectors
# ---------------------------------------------------------------------------


def _pmf_items(obj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, EmpiricalDistribution):
        if obj.n == 0:
            raise ValueError("empty empirical distribution")
        return obj.values(), obj.count_array() / obj.n
    if isinstance(obj, InvariantMeasure):
        return np.array([float(a) for a in obj.atoms]), np.array([float(p) for p in obj.masses])
    if isinstance(obj, Mapping):
        items = sorted((float(k), float(v)) for k, v in obj.items())
        return np.array([k for k, _ in items]), np.array([v for _, v in items])
    raise TypeError(f"unsupported distribution type {type(obj).__name__}")


def _is_lattice(obj) -> bool:
    if isinstance(obj, EmpiricalDistribution):
        return obj.mode == "lattice"
    if isinstance(obj, InvariantMeasure):
        return obj.is_lattice
    return isinstance(obj, Mapping)


def _aligned(a, b):
    """Two probability vectors on a common support plus the support values.

    The last entry of each vector holds mass outside the listed support (only
    nonzero when a continuous measure is compared against bins).
    """
    if isinstance(a, InvariantMeasure) and not a.is_lattice:
        a, b = b, a
    if isinstance(b, InvariantMeasure) and not b.is_lattice:
        if not (isinstance(a, EmpiricalDistribution) and a.mode == "binned"):
            raise ModeMismatch("a continuous measure can only be compared with a binned empirical law")
        keys = a.keys()
        edges_lo = keys * a.step
        pa = a.count_array() / a.n
        # occupied bins need not be contiguous
        pb = np.asarray(b.cdf(edges_lo + a.step)) - np.asarray(b.cdf(edges_lo))
        out_b = max(0.0, 1.0 - pb.sum())
        return edges_lo, np.append(pa, 0.0), np.append(pb, out_b)
    if _is_lattice(a) != _is_lattice(b):
        raise ModeMismatch("lattice and binned distributions cannot be compared")
    if isinstance(a, EmpiricalDistribution) and isinstance(b, EmpiricalDistribution) and not a.same_geometry(b):
        raise ModeMismatch("bin widths or spans differ")
    va, pa = _pmf_items(a)
    vb, pb = _pmf_items(b)
    allv = np.union1d(np.round(va, 12), np.round(vb, 12))
    A = np.zeros(allv.size + 1)
    B = np.zeros(allv.size + 1)
    A[np.searchsorted(allv, np.round(va, 12))] += pa
    B[np.searchsorted(allv, np.round(vb, 12))] += pb
    return allv, A, B


def tv_distance(a, b) -> float:
    """Half the l1 distance over shared atoms or bins."""
    _, pa, pb = _aligned(a, b)
    return float(min(1.0, 0.5 * np.abs(pa - pb).sum()))


def v_gamma_distance(a, b, gamma: float) -> float:
    """Weighted l1 distance with weight ``1 + |y|**gamma``.

    ``gamma = 0`` uses the unit weight, giving twice the TV distance.  ``y``
    is the atom, or the left bin edge for binned laws; mass outside the bins
    is weighted by the last edge, so binned values are lower bounds.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    v, pa, pb = _aligned(a, b)
    if gamma == 0:
        return float(np.abs(pa - pb).sum())
    w = 1.0 + np.abs(v) ** gamma
    last = 1.0 + (np.abs(v[-1]) ** gamma if v.size else 0.0)
    weights = np.append(w, last)
    return float(np.sum(weights * np.abs(pa - pb)))


def ks_distance(samples, cdf) -> float:
    """``sup |F_n - F|`` for a continuous reference cdf."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("ks_distance needs samples")
    if x.size < 100:
        raise InsufficientSamples("ks_distance needs at least 100 samples")
    f = cdf.cdf if isinstance(cdf, InvariantMeasure) else cdf
    F = np.asarray(f(x), dtype=float)
    n = x.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


# ---------------------------------------------------------------------------
# bootstrap helpers
# ---------------------------------------------------------------------------


def bootstrap_se(values, statistic=np.mean, n_boot: int = N_BOOT, rng=None) -> float:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("bootstrap needs data")
    g = _as_rng(rng) if rng is not None else np.random.default_rng(0)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = statistic(x[g.integers(0, x.size, x.size)])
    return float(stats.std(ddof=1))


def multinomial_tv_se(emp: EmpiricalDistribution, reference, n_boot: int = N_BOOT, rng=None) -> float:
    """Bootstrap s.e. of ``tv_distance(emp, reference)`` by multinomial resampling."""
    g = _as_rng(rng) if rng is not None else np.random.default_rng(0)
    keys = emp.keys()
    p = emp.count_array() / emp.n
    out = np.empty(n_boot)
    for b in range(n_boot):
        boot = EmpiricalDistribution.__new__(EmpiricalDistribution)
        boot.mode, boot.step, boot.n = emp.mode, emp.step, emp.n
        c = g.multinomial(emp.n, p)
        boot.counts = {int(k): int(v) for k, v in zip(keys, c) if v}
        out[b] = tv_distance(boot, reference)
    return float(out.std(ddof=1))


# ---------------------------------------------------------------------------
# geometric rate
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    r_hat: float
    log_intercept: float
    r2: float
    n_range: tuple[int, int]
    n_points: int
    slope: float
    slope_se: float = 0.0

    def interval(self, z: float = 2.0) -> tuple[float, float]:
        """``exp(slope +- z * se)`` capped at 1."""
        return (min(1.0, math.exp(self.slope - z * self.slope_se)), min(1.0, math.exp(self.slope + z * self.slope_se)))


class GeometricRate(BaseEstimator, RegressorMixin):
    """Least squares of ``log TV_n`` on ``n``; ``r_hat_ = exp(slope)`` capped at 1.

    ``fit(n, tv, stderr=None)`` keeps only points with ``tv > floor_factor *
    stderr``.  With standard errors at least ``min_points`` must survive;
    exact curves (no ``stderr``) need three.
    """

    def __init__(self, min_points: int = 4, floor_factor: float = 3.0):
        self.min_points = min_points
        self.floor_factor = floor_factor

    def fit(self, X, y, stderr=None):
        n = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
        tv = np.asarray(y, dtype=float).ravel()
        if tv.shape != n.shape:
            raise ValueError("n and tv must have equal length")
        order = np.argsort(n)
        n, tv = n[order], tv[order]
        if stderr is None:
            keep = tv > 0
            need = 3
            floor = np.zeros_like(tv)
        else:
            se = np.asarray(stderr, dtype=float).ravel()[order]
            floor = self.floor_factor * se
            keep = tv > floor
            need = self.min_points
        if keep.sum() < need:
            raise NoiseFloor(
                f"{int(keep.sum())} of {n.size} points lie above the noise floor; {need} needed",
                bound=_floor_bound(n, tv, floor, keep),
                n_above=int(keep.sum()),
            )
        x = n[keep]
        ly = np.log(tv[keep])
        slope, intercept = np.polyfit(x, ly, 1)
        resid = ly - (slope * x + intercept)
        ss_tot = np.sum((ly - ly.mean()) ** 2)
        self.slope_ = float(slope)
        self.log_intercept_ = float(intercept)
        self.r_hat_ = float(min(1.0, math.exp(slope)))
        self.r2_ = float(1.0 - np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0
        self.n_range_ = (int(x.min()), int(x.max()))
        self.n_points_ = int(keep.sum())
        dof = x.size - 2
        sxx = np.sum((x - x.mean()) ** 2)
        self.slope_se_ = float(math.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 and sxx > 0 else 0.0
        return self

    def predict(self, X):
        check_is_fitted(self, "r_hat_")
        n = np.asarray(X, dtype=float).ravel()
        return np.exp(self.log_intercept_ + self.slope_ * n)

    def result(self) -> RateFit:
        check_is_fitted(self, "r_hat_")
        return RateFit(self.r_hat_, self.log_intercept_, self.r2_, self.n_range_, self.n_points_, self.slope_, self.slope_se_)


def _floor_bound(n, tv, floor, keep):
    """Rate implied by the last resolved point and the first point lost in the floor."""
    if not keep.any():
        return None
    last = np.flatnonzero(keep)[-1]
    later = np.flatnonzero(~keep & (n > n[last]))
    if later.size == 0:
        return None
    j = later[0]
    level = max(floor[j], tv[j])
    if level <= 0:
        return 0.0
    return float(min(1.0, (level / tv[last]) ** (1.0 / (n[j] - n[last]))))


def geometric_rate_fit(tv_curve: Sequence[tuple[float, float]], stderr=None, min_points: int = 4) -> RateFit:
    """Fit ``TV_n ~ C r**n`` to ``(n, TV_n)`` pairs.

    Raises :class:`NoiseFloor` when too few points exceed three standard
    errors; its ``bound`` attribute is the rate implied by the floor.
    """
    pts = list(tv_curve)
    if not pts:
        raise ValueError("empty tv curve")
    n = [p[0] for p in pts]
    tv = [p[1] for p in pts]
    return GeometricRate(min_points=min_points).fit(n, tv, stderr).result()


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------


@dataclass
class DriftFit:
    gamma: float
    rho_hat: float
    L_hat: float
    xs: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    n_used: np.ndarray
    n_censored: np.ndarray
    ratios: np.ndarray = field(init=False)

    def __post_init__(self):
        xg = np.where(self.xs > 0, np.abs(self.xs) ** self.gamma, np.nan)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.ratios = self.estimates / xg


class DriftRegressor(BaseEstimator, RegressorMixin):
    """Fits ``E_x O^gamma <= rho * x**gamma + L`` from per-probe means.

    ``rho_`` is the largest ratio ``mean / x**gamma`` over the top
    ``top_fraction`` of probes; ``L_`` is the largest positive excess over
    ``rho_ * x**gamma`` plus ``margin`` standard errors.
    """

    def __init__(self, gamma: float = 1.0, top_fraction: float = 0.5, margin: float = 3.0):
        self.gamma = gamma
        self.top_fraction = top_fraction
        self.margin = margin

    def fit(self, X, y, stderr=None):
        xs = check_array(np.asarray(X, dtype=float).reshape(-1, 1)).ravel()
        est = np.asarray(y, dtype=float).ravel()
        se = np.zeros_like(est) if stderr is None else np.asarray(stderr, dtype=float).ravel()
        if np.any(np.diff(xs) <= 0):
            raise ValueError("probe points must be strictly increasing")
        k = max(1, int(math.ceil(self.top_fraction * xs.size)))
        top = slice(xs.size - k, xs.size)
        xg = np.abs(xs) ** self.gamma
        if np.any(xg[top] <= 0):
            raise ValueError("top probes must be positive")
        self.rho_ = float(max(0.0, np.max(est[top] / xg[top])))
        excess = est - self.rho_ * xg
        self.L_ = float(max(0.0, np.max(np.where(excess > 0, excess + self.margin * se, 0.0))))
        return self

    def predict(self, X):
        check_is_fitted(self, "rho_")
        xs = np.asarray(X, dtype=float).ravel()
        return self.rho_ * np.abs(xs) ** self.gamma + self.L_


def drift_limit(alpha: float, gamma: float, p: float = 0.5) -> float:
    """Large-``x`` limit of ``E_x O_1**gamma / x**gamma`` for a stable-domain walk.

    ``p`` is the positivity parameter and ``q = 1 - p``; needs ``0 < gamma < alpha * min(p, q)``.
    """
    q = 1.0 - p
    if not (0 < gamma < alpha * min(p, q)):
        raise ValueError("gamma must lie in (0, alpha * min(p, q))")
    down = math.sin(math.pi * alpha * q) / math.sin(math.pi * (alpha * q - gamma))
    up = math.sin(math.pi * alpha * p) / math.sin(math.pi * (alpha * p - gamma))
    return down * up


def _check_gamma(spec: IncrementSpec, gamma: float):
    if spec.finite_variance:
        if gamma not in (0, 1):
            raise ValueError("finite-variance drift fits use gamma in {0, 1}")
    else:
        alpha = getattr(spec, "alpha")
        if not (0 < gamma < alpha - 1):
            raise ValueError(f"heavy-tailed drift fits need 0 < gamma < alpha - 1 = {alpha - 1:g}")


def drift_fit(
    spec: IncrementSpec,
    gamma: float,
    xs,
    m: int,
    seed: int,
    *,
    guard: int = 10**9,
    tag: int = 0,
    min_top: float = 1e3,
) -> DriftFit:
    """Monte Carlo drift check ``E_x O_1**gamma <= rho x**gamma + L``.

    Replicas that hit the step guard are dropped and counted in
    ``n_censored``; a :class:`HeavyTailVariance` warning flags probes whose
    bootstrap s.e. exceeds 10% of the estimate.
    """
    from .walk import chain_batch

    _check_gamma(spec, gamma)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be a strictly increasing grid of at least two probes")
    if xs[-1] < min_top:
        raise ValueError(f"the largest probe must be at least {min_top:g}")
    m = int(m)
    if m < 1:
        raise ValueError("m must be positive")
    est = np.empty(xs.size)
    se = np.empty(xs.size)
    used = np.empty(xs.size, dtype=np.int64)
    cens = np.empty(xs.size, dtype=np.int64)
    boot = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(tag) + 7919,)))
    for i, x in enumerate(xs):
        b = chain_batch(spec, x, 1, seed, m=m, guard=guard, tag=tag + i)
        _, O, _ = b.completed()
        vals = O[:, 0] ** gamma if gamma != 0 else np.ones(O.shape[0])
        used[i] = vals.size
        cens[i] = b.n_censored
        if vals.size == 0:
            raise InsufficientSamples(f"every replica at x={x:g} hit the step guard")
        est[i] = vals.mean()
        se[i] = bootstrap_se(vals, rng=boot) if np.ptp(vals) > 0 else 0.0
        if est[i] > 0 and se[i] > 0.1 * est[i]:
            warnings.warn(f"bootstrap s.e. at x={x:g} exceeds 10% of the estimate", HeavyTailVariance, stacklevel=2)
    reg = DriftRegressor(gamma=gamma).fit(xs, est, se)
    return DriftFit(float(gamma), reg.rho_, reg.L_, xs, est, se, used, cens)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_report(statistic: str, value, stderr, n: int, seed: int, config: Mapping | str) -> dict:
    h = config if isinstance(config, str) else config_hash(config)
    return {
        "statistic": statistic,
        "value": value,
        "stderr": stderr,
        "n": int(n),
        "seed": int(seed),
        "config_hash": h,
    }

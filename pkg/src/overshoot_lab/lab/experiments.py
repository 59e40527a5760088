"""Named experiments with their default configurations.

Each experiment takes an :class:`ExperimentConfig` and returns an
:class:`Outcome`.  Pass/fail thresholds are read from ``cfg.thresholds``;
the defaults below are the desk-scale bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, GuardExceeded, InsufficientSamples, NoiseFloor
from ..increments import LatticePmf, RngStream, SymmetricPareto
from ..kernels import compose_check, detailed_balance_p_mc, detailed_balance_q, q_kernel_lattice, time_reversal_check
from ..measures import (
    LadderLaws,
    far_level_down_law,
    far_level_up_law,
    ladder_normalization,
    pi_h,
    pi_minus,
    pi_plus,
    pi_plus_via_ladder,
    sample_measure,
    wiener_hopf_residual,
)
from ..stats import (
    EmpiricalDistribution,
    GeometricRate,
    drift_fit,
    drift_limit,
    ks_distance,
    make_report,
    multinomial_tv_se,
    tv_distance,
    v_gamma_distance,
)
from ..walk import chain_batch, count_upcrossings_batch, cycle_batch, entrance_batch, ladder_batch
from .config import ExperimentConfig

LATTICE_UNIFORM = {"family": "LatticePmf", "support": [-2, -1, 1, 2], "probs": ["0.25", "0.25", "0.25", "0.25"]}
LATTICE_ASYMMETRIC = {"family": "LatticePmf", "support": [-3, 1, 3], "probs": ["1/3", "1/2", "1/6"]}
LAPLACE = {"family": "Laplace", "b": 1.0}
PARETO = {"family": "SymmetricPareto", "alpha": 1.5}


@dataclass
class Outcome:
    criteria: list = field(default_factory=list)
    statistics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)
    censored: dict = field(default_factory=dict)
    max_censored: float = 0.5

    def check(self, name: str, value, threshold, passed: bool, note: str = ""):
        self.criteria.append({"name": name, "value": value, "threshold": threshold, "passed": bool(passed), "note": note})

    def censor(self, label: str, n_censored: int, total: int):
        self.censored[label] = {"censored": int(n_censored), "total": int(total)}
        if total and n_censored / total > self.max_censored:
            raise GuardExceeded(f"{label}: {n_censored} of {total} replicas hit the step guard")


@dataclass(frozen=True)
class Experiment:
    name: str
    claim: str
    run: Callable[[ExperimentConfig], Outcome]
    defaults: dict


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _outcome(cfg: ExperimentConfig) -> Outcome:
    return Outcome(max_censored=cfg.param("max_censored_fraction", 0.5))


def _starts(cfg: ExperimentConfig, spec, m: int, tag: int):
    """Starting points: a number, or draws from ``pi_plus`` / ``pi_minus``."""
    start = cfg.param("start", "pi_plus")
    if isinstance(start, str):
        measures = {"pi_plus": pi_plus, "pi_minus": pi_minus}
        if start not in measures:
            raise ConfigError(f"start must be a number, 'pi_plus' or 'pi_minus', got {start!r}")
        g = RngStream(cfg.seed, (tag << 32) + 0xFFFFFFFF).generator
        return sample_measure(measures[start](spec), g, m)
    if not isinstance(start, (int, float)):
        raise ConfigError("start must be a number or a measure name")
    return float(start)


def _law_table(emp: EmpiricalDistribution, target) -> tuple[list, list]:
    if emp.mode == "lattice":
        ref = target.pmf()
        ys = sorted(set(emp.probs()) | set(ref))
        emp_p = emp.probs()
        return ["y", "empirical", "invariant"], [[y, emp_p.get(y, 0.0), ref.get(y, 0.0)] for y in ys]
    lo = emp.values()
    mass = np.asarray(target.cdf(lo + emp.step)) - np.asarray(target.cdf(lo))
    p = emp.count_array() / emp.n
    return ["bin_left", "empirical", "invariant"], [[a, b, c] for a, b, c in zip(lo.tolist(), p.tolist(), mass.tolist())]


def _compare_law(out: Outcome, cfg, name: str, spec, samples, target, tag: int):
    """TV on lattices, KS otherwise; records the criterion, a report and a table."""
    if spec.is_lattice:
        emp = EmpiricalDistribution.from_samples(samples, span=spec.span_d)
        value = tv_distance(emp, target)
        se = multinomial_tv_se(emp, target, rng=RngStream(cfg.seed, (tag << 32) + 0xFFFFFFFE).generator)
        thr = cfg.threshold("tv")
        out.check(f"{name}_tv", value, thr, value <= thr)
        out.reports.append(make_report(f"{name}_tv", value, se, emp.n, cfg.seed, cfg.hash()))
    else:
        emp = EmpiricalDistribution.for_spec(spec, samples)
        value = ks_distance(samples, target)
        thr = cfg.threshold("ks")
        out.check(f"{name}_ks", value, thr, value <= thr)
        out.reports.append(make_report(f"{name}_ks", value, None, len(samples), cfg.seed, cfg.hash()))
    out.tables[f"{name}_law.csv"] = _law_table(emp, target)
    return value


def _guard(cfg, spec):
    if cfg.guard is not None:
        return cfg.guard
    return 10**9 if spec.is_lattice else 10**6


# ---------------------------------------------------------------------------
# invariance
# ---------------------------------------------------------------------------


def run_stationarity(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    s0 = _starts(cfg, spec, cfg.m, 0)
    b = chain_batch(spec, s0, cfg.n, cfg.seed, m=None if np.ndim(s0) else cfg.m, guard=_guard(cfg, spec), tag=1)
    out.censor("chain", b.n_censored, b.done.size)
    _, O, _ = b.completed()
    pooled = cfg.param("statistic", "pooled")
    vals = O[:, cfg.burn_in :].ravel() if pooled == "pooled" else O[:, -1]
    out.statistics["n_values"] = int(vals.size)
    _compare_law(out, cfg, f"overshoot_{pooled}", spec, vals, pi_plus(spec), 2)
    return out


def run_undershoot(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    s0 = _starts(cfg, spec, cfg.m, 0)
    b = chain_batch(spec, s0, cfg.n, cfg.seed, m=None if np.ndim(s0) else cfg.m, guard=_guard(cfg, spec), tag=1)
    out.censor("chain", b.n_censored, b.done.size)
    _, _, U = b.completed()
    vals = (-U[:, cfg.burn_in :] - spec.span_d).ravel()
    _compare_law(out, cfg, "shifted_undershoot", spec, vals, pi_plus(spec), 2)
    return out


def run_cycle(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    g = RngStream(cfg.seed, 0xFFFFFFFF).generator
    guard = _guard(cfg, spec)
    legs = (
        ("down_from_pi_plus", pi_plus(spec), "down", pi_minus(spec)),
        ("up_from_pi_minus", pi_minus(spec), "up", pi_plus(spec)),
    )
    for k, (name, start, direction, target) in enumerate(legs):
        s0 = sample_measure(start, g, cfg.m)
        b = chain_batch(spec, s0, 1, cfg.seed, direction=direction, guard=guard, tag=1 + k)
        out.censor(name, b.n_censored, b.done.size)
        _, O, _ = b.completed()
        _compare_law(out, cfg, name, spec, O[:, 0], target, 10 + k)
    return out


def run_reversal(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    level = cfg.threshold("level")
    factor = cfg.threshold("joint_factor")
    r = time_reversal_check(
        spec, cfg.m, cfg.seed, level=level, bin_width=cfg.param("bin_width", 0.25), guard=_guard(cfg, spec), tag=1
    )
    out.censor("excursions", r.n_censored, 2 * (cfg.m // 2))
    for key, p in r.p_values.items():
        out.check(f"marginal_{key}_pvalue", p, level, p >= level)
    out.check("joint_binned_tv", r.joint_tv, factor * r.joint_null, r.joint_tv <= factor * r.joint_null, "bound is factor x null RMS")
    out.statistics.update({"joint_null_rms": r.joint_null, "bin_width": r.bin_width, "n_per_half": list(r.n)})
    out.reports.append(make_report("joint_binned_tv", r.joint_tv, r.joint_null, sum(r.n), cfg.seed, cfg.hash()))
    return out


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def run_q_balance(cfg: ExperimentConfig) -> Outcome:
    out = _outcome(cfg)
    thr = cfg.threshold("residual")
    for i, spec in enumerate(cfg.increments()):
        if not isinstance(spec, LatticePmf):
            raise ConfigError("q-balance needs lattice specs")
        res = detailed_balance_q(spec)
        out.check(f"residual_spec{i}", res, thr, res <= thr)
        q = q_kernel_lattice(spec)
        rows = [[x, y, q.matrix[a, b]] for a, x in enumerate(q.states) for b, y in enumerate(q.states) if q.matrix[a, b] != 0]
        out.tables[f"q_kernel_spec{i}.csv"] = (["x", "y", "prob"], rows)
        out.reports.append(make_report(f"residual_spec{i}", res, 0.0, 0, cfg.seed, cfg.hash()))
    return out


def _bucket(spec, b):
    if spec.is_lattice:
        return float(b)
    return (float(b[0]), float(b[1]))


def run_p_balance(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    pairs = [(_bucket(spec, a), _bucket(spec, b)) for a, b in cfg.param("pairs")]
    n_seeds = int(cfg.param("n_seeds", 20))
    need = cfg.threshold("min_overlaps")
    overlaps = [0] * len(pairs)
    rows = []
    for s in range(n_seeds):
        res = detailed_balance_p_mc(spec, pairs, cfg.m, cfg.seed, level=cfg.threshold("ci_level"), guard=_guard(cfg, spec), tag=4 * s)
        for i, fp in enumerate(res):
            overlaps[i] += fp.overlap
            rows.append([s, i, fp.flux_ab, fp.ci_ab[0], fp.ci_ab[1], fp.flux_ba, fp.ci_ba[0], fp.ci_ba[1], int(fp.overlap)])
    for i, c in enumerate(overlaps):
        out.check(f"pair{i}_overlaps", c, need, c >= need, f"of {n_seeds} independent repetitions")
    out.tables["fluxes.csv"] = (["repetition", "pair", "flux_ab", "ci_ab_lo", "ci_ab_hi", "flux_ba", "ci_ba_lo", "ci_ba_hi", "overlap"], rows)
    return out


def run_compose(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    x = float(cfg.param("start", 10))
    for k, n in enumerate(cfg.param("steps", [1, 3])):
        tv = compose_check(spec, x, n, cfg.m, cfg.seed, m_prime=cfg.param("m_prime"), tag=100 * k, guard=_guard(cfg, spec))
        thr = cfg.threshold("tv")[str(n)]
        out.check(f"tv_n{n}", tv, thr, tv <= thr)
        out.reports.append(make_report(f"tv_n{n}", tv, None, cfg.m, cfg.seed, cfg.hash()))
    return out


# ---------------------------------------------------------------------------
# ladder heights
# ---------------------------------------------------------------------------


def _ladders(cfg, spec, out):
    b = ladder_batch(spec, cfg.param("m_ladder", cfg.m), cfg.seed, guard=_guard(cfg, spec), tag=7)
    out.censor("ladders", b.n_censored, b.done.size)
    return LadderLaws.from_batch(spec, b)


def _resampled(laws: LadderLaws, g) -> LadderLaws:
    def one(law):
        keys = sorted(law)
        c = g.multinomial(laws.n, [law[k] for k in keys])
        return {k: v / laws.n for k, v in zip(keys, c) if v}

    return LadderLaws(laws.span, one(laws.h_plus), one(laws.h_minus), one(laws.h_tilde_minus), laws.n)


def run_lemma1(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    laws = _ladders(cfg, spec, out)
    rebuilt = pi_plus_via_ladder(laws, spec)
    tv = tv_distance(rebuilt, pi_plus(spec))
    out.check("ladder_pi_plus_tv", tv, cfg.threshold("tv"), tv <= cfg.threshold("tv"))
    wh = wiener_hopf_residual(laws, spec)
    out.check("wiener_hopf_residual", wh, cfg.threshold("wiener_hopf"), wh <= cfg.threshold("wiener_hopf"))
    lhs, rhs = ladder_normalization(laws, spec)
    g = RngStream(cfg.seed, 0xFFFFFFFF).generator
    diffs = []
    for _ in range(int(cfg.param("n_boot", 200))):
        a, b = ladder_normalization(_resampled(laws, g), spec)
        diffs.append(a - b)
    sigma = float(np.std(diffs, ddof=1))
    k = cfg.threshold("sigmas")
    out.check("normalization_gap", abs(lhs - rhs), k * sigma, abs(lhs - rhs) <= k * sigma, "bound is sigmas x bootstrap s.e.")
    out.statistics.update({"normalization_lhs": lhs, "normalization_rhs": rhs, "normalization_se": sigma})
    ref = pi_plus(spec).pmf()
    out.tables["ladder_pi_plus.csv"] = (["y", "ladder", "invariant"], [[y, p, ref.get(y, 0.0)] for y, p in sorted(rebuilt.items())])
    out.reports.append(make_report("ladder_pi_plus_tv", tv, None, laws.n, cfg.seed, cfg.hash()))
    out.reports.append(make_report("wiener_hopf_residual", wh, None, laws.n, cfg.seed, cfg.hash()))
    return out


def run_wiener_hopf(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    laws = _ladders(cfg, spec, out)
    wh = wiener_hopf_residual(laws, spec)
    out.check("wiener_hopf_residual", wh, cfg.threshold("wiener_hopf"), wh <= cfg.threshold("wiener_hopf"))
    out.reports.append(make_report("wiener_hopf_residual", wh, None, laws.n, cfg.seed, cfg.hash()))
    return out


def run_far_level(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    laws = _ladders(cfg, spec, out)
    x = float(cfg.param("level", 1000))
    for k, direction in enumerate(cfg.param("directions", ["down"])):
        if direction == "down":
            start, limit = x, far_level_down_law(laws, spec)
        elif direction == "up":
            start, limit = -x, far_level_up_law(laws, spec)
        else:
            raise ConfigError("directions must be 'down' or 'up'")
        b = chain_batch(spec, start, 1, cfg.seed, m=cfg.m, direction=direction, guard=_guard(cfg, spec), tag=20 + k)
        out.censor(direction, b.n_censored, b.done.size)
        _, O, _ = b.completed()
        emp = EmpiricalDistribution.from_samples(O[:, 0], span=spec.span_d)
        tv = tv_distance(emp, limit)
        out.check(f"{direction}_limit_tv", tv, cfg.threshold("tv"), tv <= cfg.threshold("tv"))
        emp_p = emp.probs()
        ys = sorted(set(emp_p) | set(limit))
        out.tables[f"{direction}_limit.csv"] = (["y", "empirical", "limit"], [[y, emp_p.get(y, 0.0), limit.get(y, 0.0)] for y in ys])
        out.reports.append(make_report(f"{direction}_limit_tv", tv, None, emp.n, cfg.seed, cfg.hash()))
    return out


# ---------------------------------------------------------------------------
# entrance chain
# ---------------------------------------------------------------------------


def run_entrance(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    h = float(cfg.h)
    b = entrance_batch(spec, h, float(cfg.param("start", 0.0)), cfg.burn_in + cfg.n, cfg.seed, m=cfg.m, guard=_guard(cfg, spec), tag=1)
    out.censor("entrances", b.n_censored, b.done.size)
    vals = b.positions[b.done][:, cfg.burn_in :].ravel()
    target = pi_h(spec, h)
    if spec.is_lattice:
        emp = EmpiricalDistribution.from_samples(vals, span=spec.span_d)
        ref = target.pmf()
        dev = max(abs(emp.prob_of(y) - p) for y, p in ref.items())
        out.check("occupation_max_deviation", dev, cfg.threshold("occupation"), dev <= cfg.threshold("occupation"))
        out.statistics["occupation"] = {str(y): emp.prob_of(y) for y in sorted(ref)}
        out.tables["entrance_law.csv"] = _law_table(emp, target)
        out.reports.append(make_report("occupation_max_deviation", dev, None, emp.n, cfg.seed, cfg.hash()))
    else:
        ks = ks_distance(vals, target)
        out.check("entrance_ks", ks, cfg.threshold("ks"), ks <= cfg.threshold("ks"))
        out.tables["entrance_law.csv"] = _law_table(EmpiricalDistribution.for_spec(spec, vals), target)
        out.reports.append(make_report("entrance_ks", ks, None, vals.size, cfg.seed, cfg.hash()))
    return out


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


def _exact_start_distance(spec, x, target, gamma=None):
    if spec.is_lattice:
        delta = {float(x): 1.0}
        return v_gamma_distance(delta, target, gamma) if gamma is not None else tv_distance(delta, target)
    if gamma is None:
        return 1.0
    return None


def _distance_curve(cfg, spec, x, m, tag, out, gamma=None):
    """``(n, distance, s.e.)`` for ``n = 0..N``; row 0 is exact when available."""
    n_max = cfg.n
    b = chain_batch(spec, x, n_max, cfg.seed, m=m, guard=_guard(cfg, spec), tag=tag)
    out.censor(f"x={x:g}", b.n_censored, b.done.size)
    _, O, _ = b.completed()
    target = pi_plus(spec)
    g = RngStream(cfg.seed, (tag << 32) + 0xFFFFFFFE).generator
    rows = []
    d0 = _exact_start_distance(spec, x, target, gamma)
    if d0 is not None:
        rows.append((0, d0, 0.0))
    for k in range(n_max):
        emp = EmpiricalDistribution.for_spec(spec, O[:, k])
        if gamma is None:
            val = tv_distance(emp, target)
            se = multinomial_tv_se(emp, target, rng=g)
        else:
            val = v_gamma_distance(emp, target, gamma)
            se = _multinomial_se(emp, lambda e: v_gamma_distance(e, target, gamma), g)
        rows.append((k + 1, val, se))
    return rows


def _multinomial_se(emp, stat, g, n_boot=200):
    keys = emp.keys()
    p = emp.count_array() / emp.n
    vals = np.empty(n_boot)
    for i in range(n_boot):
        c = g.multinomial(emp.n, p)
        e = EmpiricalDistribution.__new__(EmpiricalDistribution)
        e.mode, e.step, e.n = emp.mode, emp.step, emp.n
        e.counts = {int(k): int(v) for k, v in zip(keys, c) if v}
        vals[i] = stat(e)
    return float(vals.std(ddof=1))


def _rate(rows, min_points, r2_min):
    """Fit summary and whether it counts as geometric decay."""
    ns = [r[0] for r in rows]
    vals = [r[1] for r in rows]
    ses = [r[2] for r in rows]
    try:
        est = GeometricRate(min_points=min_points).fit(ns, vals, ses)
    except NoiseFloor as exc:
        ok = exc.bound is not None and exc.bound < 1
        return {"kind": "noise_floor", "bound": exc.bound, "n_above": exc.n_above, "interval": [0.0, exc.bound if exc.bound is not None else 1.0]}, ok
    fit = est.result()
    ok = fit.r_hat < 1 and fit.r2 >= r2_min
    return {"kind": "fit", "r_hat": fit.r_hat, "r2": fit.r2, "n_points": fit.n_points, "interval": list(fit.interval())}, ok


def _monotone(rows, factor):
    """Largest increase between consecutive simulated points, in units of the allowed band."""
    worst = 0.0
    for (_, a, sa), (_, b, sb) in zip(rows, rows[1:]):
        band = factor * math.sqrt(sa * sa + sb * sb)
        if b > a:
            worst = max(worst, (b - a) / band if band > 0 else math.inf)
    return worst


def _curve_table(rows):
    return ["n", "distance", "stderr"], [list(r) for r in rows]


def run_tv_decay(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    x = float(cfg.param("start", 10))
    rows = _distance_curve(cfg, spec, x, cfg.m, 1, out)
    sim = [r for r in rows if r[0] >= 1]
    worst = _monotone(sim, cfg.threshold("band_sigmas"))
    out.check("monotone_trend", worst, 1.0, worst <= 1.0, "largest inversion in bands")
    summary, ok = _rate(rows, cfg.threshold("min_points"), cfg.threshold("r2"))
    note = "noise floor reached: rate bounded by the floor" if summary["kind"] == "noise_floor" else "least-squares fit"
    out.check("geometric_rate", summary.get("r_hat", summary.get("bound")), 1.0, ok, note)
    out.statistics["rate"] = summary
    out.tables["tv_curve.csv"] = _curve_table(rows)
    for n, v, se in rows:
        out.reports.append(make_report(f"tv_n{n}", v, se, cfg.m, cfg.seed, cfg.hash()))
    return out


def run_rate(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    x = float(cfg.param("start", 10))
    gamma = float(cfg.gamma)
    rows = _distance_curve(cfg, spec, x, cfg.m, 1, out, gamma=gamma)
    summary, ok = _rate(rows, cfg.threshold("min_points"), cfg.threshold("r2"))
    out.check("v_gamma_rate", summary.get("r_hat", summary.get("bound")), 1.0, ok, summary["kind"])
    out.statistics["rate"] = summary
    out.tables["v_gamma_curve.csv"] = _curve_table(rows)
    return out


def run_uniform_rate(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    xs = [float(x) for x in cfg.probes]
    curves = {}
    intervals = []
    all_ok = True
    for i, x in enumerate(xs):
        rows = _distance_curve(cfg, spec, x, cfg.m, 1 + i, out)
        curves[x] = rows
        summary, ok = _rate(rows, cfg.threshold("min_points"), cfg.threshold("r2"))
        all_ok &= ok
        intervals.append(summary["interval"])
        out.statistics[f"rate_x={x:g}"] = summary
    lo = max(iv[0] for iv in intervals)
    hi = min(iv[1] for iv in intervals)
    out.check("rates_decay", int(all_ok), 1, all_ok, "every start decays geometrically")
    out.check("rate_intervals_overlap", lo, hi, lo <= hi, "largest lower end vs smallest upper end")
    # worst start at each n
    n_rows = min(len(r) for r in curves.values())
    sup_rows = []
    for k in range(n_rows):
        best = max((curves[x][k] for x in xs), key=lambda r: r[1])
        sup_rows.append(best)
    summary, _ = _rate(sup_rows, cfg.threshold("min_points"), cfg.threshold("r2"))
    out.statistics["rate_sup"] = summary
    header = ["x", "n", "distance", "stderr"]
    out.tables["tv_curves.csv"] = (header, [[x, n, v, se] for x in xs for n, v, se in curves[x]])
    return out


def run_drift(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    gamma = float(cfg.gamma)
    xs = [float(x) for x in cfg.probes]
    try:
        fit = drift_fit(spec, gamma, xs, cfg.m, cfg.seed, guard=_guard(cfg, spec), tag=1)
    except InsufficientSamples as exc:
        raise GuardExceeded(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for x, c, u in zip(xs, fit.n_censored, fit.n_used):
        out.censor(f"x={x:g}", int(c), int(c + u))
    out.statistics.update({"rho_hat": fit.rho_hat, "L_hat": fit.L_hat, "ratios": fit.ratios.tolist(), "stderrs": fit.stderrs.tolist()})
    if isinstance(spec, SymmetricPareto):
        limit = drift_limit(spec.alpha, gamma, spec.positivity)
        tol = cfg.threshold("ratio_tol")
        top = float(fit.ratios[-1])
        out.statistics["ratio_limit"] = limit
        out.check("top_probe_ratio", top, [limit - tol, limit + tol], abs(top - limit) <= tol, f"limit {limit:.6g}")
    else:
        r = fit.ratios
        dec = bool(np.all(np.diff(r) < 0))
        out.check("ratios_decreasing", int(dec), 1, dec, "strictly decreasing over the probe grid")
    rows = [[x, e, s, rr, int(nu), int(nc)] for x, e, s, rr, nu, nc in zip(xs, fit.estimates, fit.stderrs, fit.ratios, fit.n_used, fit.n_censored)]
    out.tables["drift.csv"] = (["x", "moment", "stderr", "ratio", "n_used", "n_censored"], rows)
    for x, e, s, nu in zip(xs, fit.estimates, fit.stderrs, fit.n_used):
        out.reports.append(make_report(f"moment_x={x:g}", float(e), float(s), int(nu), cfg.seed, cfg.hash()))
    return out


def run_crossings_growth(cfg: ExperimentConfig) -> Outcome:
    spec = cfg.increment()
    out = _outcome(cfg)
    n0 = int(cfg.n)
    means = []
    ses = []
    for k, steps in enumerate((n0, 4 * n0)):
        c = count_upcrossings_batch(spec, 0.0, steps, cfg.seed, m=cfg.m, tag=1 + k)
        means.append(float(c.mean()))
        ses.append(float(c.std(ddof=1) / math.sqrt(c.size)))
    ratio = means[1] / means[0]
    tol = cfg.threshold("ratio_tol")
    out.check("growth_ratio", ratio, [2 - tol, 2 + tol], abs(ratio - 2) <= tol, "quadrupling the horizon doubles the mean count")
    out.statistics.update({"mean_counts": means, "stderrs": ses, "scaled_means": [means[0] / math.sqrt(n0), means[1] / math.sqrt(4 * n0)]})
    out.tables["counts.csv"] = (["steps", "mean", "stderr"], [[n0, means[0], ses[0]], [4 * n0, means[1], ses[1]]])
    return out


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _d(**kw):
    return kw


CATALOG: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment(
            "stationarity",
            "pi_plus is invariant for the overshoot chain",
            run_stationarity,
            _d(spec=LATTICE_UNIFORM, seed=1, m=100_000, n=50, start="pi_plus", statistic="pooled", thresholds={"tv": 0.005, "ks": 0.01}),
        ),
        Experiment(
            "cycle",
            "alternating crossings swap pi_plus and pi_minus",
            run_cycle,
            _d(spec=LATTICE_UNIFORM, seed=1, m=100_000, thresholds={"tv": 0.005, "ks": 0.01}),
        ),
        Experiment(
            "undershoot",
            "pi_plus is invariant for the shifted undershoot chain",
            run_undershoot,
            _d(spec=LATTICE_UNIFORM, seed=1, m=100_000, n=10, start="pi_plus", thresholds={"tv": 0.005, "ks": 0.01}),
        ),
        Experiment(
            "reversal",
            "an excursion from pi_plus reads the same backwards",
            run_reversal,
            _d(spec=LAPLACE, seed=1, m=100_000, bin_width=0.25, thresholds={"level": 1e-3, "joint_factor": 3.0}),
        ),
        Experiment(
            "q-balance",
            "Q is reversible for pi_plus (exact)",
            run_q_balance,
            _d(spec=[LATTICE_UNIFORM, LATTICE_ASYMMETRIC], seed=1, thresholds={"residual": 1e-12}),
        ),
        Experiment(
            "p-balance",
            "P is reversible for pi_plus (simulated fluxes)",
            run_p_balance,
            _d(spec=LATTICE_UNIFORM, seed=1, m=20_000, pairs=[[0, 1]], n_seeds=20, thresholds={"min_overlaps": 18, "ci_level": 0.95}),
        ),
        Experiment(
            "compose",
            "the overshoot chain moves by PQ",
            run_compose,
            _d(spec=LATTICE_UNIFORM, seed=1, m=1_000_000, m_prime=1_000_000, start=10, steps=[1, 3], thresholds={"tv": {"1": 0.01, "3": 0.02}}),
        ),
        Experiment(
            "lemma1",
            "pi_plus from ladder heights, with the normalisation identity",
            run_lemma1,
            _d(spec=LATTICE_UNIFORM, seed=1, m=1_000_000, n_boot=200, thresholds={"tv": 0.01, "wiener_hopf": 0.01, "sigmas": 3.0}),
        ),
        Experiment(
            "wiener-hopf",
            "ladder heights factorise the increment law",
            run_wiener_hopf,
            _d(spec=LATTICE_UNIFORM, seed=1, m=1_000_000, thresholds={"wiener_hopf": 0.01}),
        ),
        Experiment(
            "far-level",
            "crossings from a remote level follow the renewal limit",
            run_far_level,
            _d(spec=LATTICE_UNIFORM, seed=1, m=100_000, m_ladder=1_000_000, level=1000, directions=["down"], thresholds={"tv": 0.02}),
        ),
        Experiment(
            "entrance",
            "pi_h is invariant for entrances into [0, h]",
            run_entrance,
            _d(spec=LATTICE_UNIFORM, seed=1, m=100_000, h=1, burn_in=5, n=5, start=0, thresholds={"occupation": 0.005, "ks": 0.01}),
        ),
        Experiment(
            "tv-decay",
            "the law of O_n approaches pi_plus geometrically",
            run_tv_decay,
            _d(spec=LATTICE_UNIFORM, seed=1, m=1_000_000, n=10, start=10, thresholds={"band_sigmas": 3.0, "min_points": 4, "r2": 0.9}),
        ),
        Experiment(
            "rate",
            "V_gamma distance to pi_plus decays geometrically",
            run_rate,
            _d(spec=LATTICE_UNIFORM, seed=1, m=200_000, n=10, start=10, gamma=1.0, thresholds={"min_points": 4, "r2": 0.9}),
        ),
        Experiment(
            "uniform-rate",
            "the decay rate does not depend on the start",
            run_uniform_rate,
            _d(spec=LATTICE_UNIFORM, seed=1, m=200_000, n=10, probes=[0, 1, 10, 100, 1000], thresholds={"min_points": 4, "r2": 0.9}),
        ),
        Experiment(
            "drift",
            "E_x O_1^gamma <= rho x^gamma + L with rho < 1",
            run_drift,
            _d(spec=PARETO, seed=1, m=2000, gamma=0.25, probes=[100, 300, 1000], guard=10**9, thresholds={"ratio_tol": 0.1}),
        ),
        Experiment(
            "crossings-growth",
            "the number of up-crossings grows like the square root of time",
            run_crossings_growth,
            _d(spec=LATTICE_UNIFORM, seed=1, m=10_000, n=10_000, thresholds={"ratio_tol": 0.1}),
        ),
    ]
}


def defaults_for(name: str) -> dict:
    exp = CATALOG[name]
    d = dict(exp.defaults)
    d["experiment"] = name
    return d

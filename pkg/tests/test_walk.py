import io
import math

import numpy as np
import pytest
from scipy import stats as sps

from overshoot_lab import (
    GuardExceeded,
    RngStream,
    chain_batch,
    count_upcrossings,
    cycle_batch,
    entrance_batch,
    ladder_batch,
    sample_ladders,
    simulate_down_chain,
    simulate_entrance_chain,
    simulate_overshoot_chain,
    write_events_csv,
)
from overshoot_lab.walk import count_upcrossings_batch


def naive_first_upcrossing(support, probs, x, m, cap, seed):
    """Single-step vectorised walk; returns (O_1, T_1) for replicas crossing within ``cap`` steps."""
    g = np.random.default_rng(seed)
    s = np.full(m, float(x))
    below = s < 0
    T = np.zeros(m, dtype=np.int64)
    O = np.full(m, np.nan)
    active = np.ones(m, dtype=bool)
    for t in range(1, cap + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s[idx] += g.choice(support, size=idx.size, p=probs)
        hit = below[idx] & (s[idx] >= 0)
        O[idx[hit]] = s[idx[hit]]
        T[idx[hit]] = t
        active[idx[hit]] = False
        below[idx] |= s[idx] < 0
    done = ~active
    return O[done], T[done]


# -- scalar API ----------------------------------------------------------------


def test_unit_walk_overshoots_are_zero(unit_walk):
    ev = simulate_overshoot_chain(unit_walk, 5, 3, RngStream(1))
    assert [e.overshoot for e in ev] == [0.0, 0.0, 0.0]
    assert all(e.undershoot == -1.0 for e in ev)
    assert all(e.direction == "up" for e in ev)
    assert [e.index for e in ev] == [1, 2, 3]


def test_unit_walk_down_overshoot(unit_walk):
    ev = simulate_down_chain(unit_walk, 5, 1, RngStream(2))
    assert ev[0].overshoot == -1.0
    assert ev[0].undershoot == 0.0
    assert ev[0].time >= 6


def test_up_event_invariants(uniform4):
    ev = simulate_overshoot_chain(uniform4, 0, 200, RngStream(3))
    times = [e.time for e in ev]
    assert all(b > a for a, b in zip(times, times[1:]))
    for e in ev:
        assert e.undershoot < 0 <= e.overshoot < uniform4.m_plus
        # one increment separates the two positions
        assert e.overshoot - e.undershoot in (1.0, 2.0)
        assert float(e.overshoot).is_integer()


def test_down_event_invariants(laplace):
    ev = simulate_down_chain(laplace, 2.0, 50, RngStream(4), guard=10**8)
    for e in ev:
        assert e.undershoot >= 0 > e.overshoot


def test_guard_exceeded_is_raised(pareto):
    with pytest.raises(GuardExceeded) as info:
        simulate_overshoot_chain(pareto, 1e6, 5, RngStream(5), guard=10)
    assert info.value.steps == 10


def test_off_lattice_start_rejected(uniform4):
    with pytest.raises(ValueError):
        simulate_overshoot_chain(uniform4, 0.5, 1, RngStream(1))
    with pytest.raises(ValueError):
        simulate_overshoot_chain(uniform4, math.inf, 1, RngStream(1))


def test_entrance_rejects_bad_h(uniform4, laplace):
    with pytest.raises(ValueError):
        simulate_entrance_chain(laplace, math.inf, 0.0, 1, RngStream(1))
    with pytest.raises(ValueError):
        simulate_entrance_chain(laplace, 0.0, 0.0, 1, RngStream(1))
    with pytest.raises(ValueError):
        simulate_entrance_chain(uniform4, 1.5, 0, 1, RngStream(1))


def test_entrance_unit_walk_enters_at_edges(unit_walk):
    ev = simulate_entrance_chain(unit_walk, 1, 5, 20, RngStream(6))
    # the first entrance comes from above, so it lands on h
    assert ev[0].position == 1.0
    assert all(e.position in (0.0, 1.0) for e in ev)


def test_entrance_positions_inside_interval(laplace):
    ev = simulate_entrance_chain(laplace, 1.0, 0.3, 100, RngStream(7), guard=10**8)
    assert all(0 <= e.position <= 1 for e in ev)
    assert all(b.time > a.time for a, b in zip(ev, ev[1:]))


def test_count_upcrossings_first_step(unit_walk):
    for seed in range(20):
        assert count_upcrossings(unit_walk, 0, 1, RngStream(seed)) == 0


def test_count_upcrossings_two_steps(unit_walk):
    # only the path -1, 0 crosses up within two steps
    c = count_upcrossings_batch(unit_walk, 0, 2, 1, m=100_000)
    assert abs(c.mean() - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 1e5)


def test_count_upcrossings_sqrt_growth(unit_walk):
    ns = [10**3, 10**4, 10**5]
    means = [count_upcrossings_batch(unit_walk, 0, n, 2, m=4000, tag=i).mean() / math.sqrt(n) for i, n in enumerate(ns)]
    assert max(means) / min(means) < 2
    a = count_upcrossings_batch(unit_walk, 0, 10**4, 3, m=4000, tag=10).mean()
    b = count_upcrossings_batch(unit_walk, 0, 4 * 10**4, 3, m=4000, tag=11).mean()
    assert b / a == pytest.approx(2.0, abs=0.2)


# -- ladders -------------------------------------------------------------------


def test_unit_walk_ladders(unit_walk):
    lad = sample_ladders(unit_walk, 500, RngStream(8))
    assert all(s.h_plus == 1 and s.h_minus == -1 for s in lad)
    assert set(s.h_tilde_minus for s in lad) <= {0.0, -1.0}
    # ladder times are heavy tailed, so a few replicas may be censored
    b = ladder_batch(unit_walk, 20_000, 8)
    zero = np.mean(b.h_tilde_minus[b.done] == 0)
    assert abs(zero - 0.5) < 4 * math.sqrt(0.25 / b.done.sum())


def test_ladder_signs(uniform4, laplace):
    for spec in (uniform4, laplace):
        b = ladder_batch(spec, 5000, 9, guard=10**7)
        d = b.done
        assert np.all(b.h_plus[d] > 0)
        assert np.all(b.h_minus[d] < 0)
        assert np.all(b.h_tilde_minus[d] <= 0)


def test_laplace_ladder_heights_are_exponential(laplace):
    # memoryless tails: every overshoot of a level is Exp(1)
    b = ladder_batch(laplace, 20_000, 10, guard=10**7)
    d = b.done
    assert sps.kstest(b.h_plus[d], "expon").pvalue > 1e-3
    assert sps.kstest(-b.h_minus[d], "expon").pvalue > 1e-3


def test_laplace_ladder_mean_stable_across_seeds(laplace):
    a = ladder_batch(laplace, 20_000, 11, guard=10**7)
    b = ladder_batch(laplace, 20_000, 12, guard=10**7)
    ma, mb = a.h_plus[a.done].mean(), b.h_plus[b.done].mean()
    assert abs(ma - mb) < 4 * math.sqrt(2 / 20_000)


# -- batch engine vs naive walk --------------------------------------------------


def test_block_stepping_matches_single_steps(uniform4):
    cap = 2000
    O_naive, T_naive = naive_first_upcrossing([-2, -1, 1, 2], [0.25] * 4, 7, 40_000, cap, 13)
    b = chain_batch(uniform4, 7, 1, 13, m=40_000, guard=cap)
    T, O, _ = b.completed()
    # joint law of the overshoot and a coarse time bucket
    bucket = lambda t: np.minimum(np.log2(t).astype(int), 10)
    code_a = O_naive.astype(int) * 16 + bucket(T_naive)
    code_b = O[:, 0].astype(int) * 16 + bucket(T[:, 0])
    cats = np.union1d(code_a, code_b)
    table = np.array([[np.sum(code_a == c) for c in cats], [np.sum(code_b == c) for c in cats]])
    table = table[:, table.sum(axis=0) >= 20]
    assert sps.chi2_contingency(table)[1] > 1e-3
    # the censored fraction agrees too
    assert abs(O_naive.size / 40_000 - b.done.mean()) < 4 * math.sqrt(0.25 / 40_000) * 1.5


def test_laplace_overshoots_exponential_from_any_start(laplace):
    b = chain_batch(laplace, 3.0, 2, 14, m=20_000, guard=10**6)
    _, O, _ = b.completed()
    assert sps.kstest(O[:, 0], "expon").pvalue > 1e-3
    assert sps.kstest(O[:, 1], "expon").pvalue > 1e-3


def test_markov_property_contingency(uniform4):
    b = chain_batch(uniform4, 0, 3, 15, m=60_000)
    _, O, _ = b.completed()
    prev, cur, nxt = O[:, 0], O[:, 1], O[:, 2]
    for state in (0.0, 1.0):
        sel = cur == state
        table = np.array([[np.sum(sel & (prev == a) & (nxt == c)) for c in (0.0, 1.0)] for a in (0.0, 1.0)])
        # Bonferroni over the two strata
        assert sps.chi2_contingency(table)[1] > 1e-3 / 2


def test_cycle_batch_extremes(uniform4):
    b = cycle_batch(uniform4, [0, 3, -4], 16, guard=10**6)
    assert np.all(b.undershoots < 0)
    assert np.all(b.overshoots >= 0)
    assert np.all(b.path_max >= b.starts)
    assert np.all(b.path_min <= np.minimum(b.starts, b.undershoots))


# -- reproducibility -------------------------------------------------------------


def test_batches_are_bit_reproducible(laplace):
    a = chain_batch(laplace, 0.0, 5, 21, m=3000, guard=10**5)
    b = chain_batch(laplace, 0.0, 5, 21, m=3000, guard=10**5)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.overshoots, b.overshoots, equal_nan=True)


def test_results_do_not_depend_on_thread_count(uniform4, monkeypatch):
    monkeypatch.setenv("OVERSHOOT_LAB_THREADS", "1")
    a = chain_batch(uniform4, 0, 4, 22, m=5000)
    monkeypatch.setenv("OVERSHOOT_LAB_THREADS", "3")
    b = chain_batch(uniform4, 0, 4, 22, m=5000)
    assert np.array_equal(a.overshoots, b.overshoots, equal_nan=True)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.done, b.done)


def test_entrance_batch_matches_scalar_api(laplace):
    b = entrance_batch(laplace, 1.0, 0.0, 5, 23, m=200, guard=10**6)
    assert np.all((b.positions[b.done] >= 0) & (b.positions[b.done] <= 1))


# -- CSV -------------------------------------------------------------------------


def test_events_csv(unit_walk):
    b = chain_batch(unit_walk, 5, 2, 24, m=2)
    buf = io.StringIO()
    write_events_csv(buf, b)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "replica,n,T_n,O_n,U_n,direction"
    assert len(lines) == 5
    r, n, t, o, u, d = lines[1].split(",")
    assert (r, n, o, u, d) == ("0", "1", "0", "-1", "up")
    ev = simulate_overshoot_chain(unit_walk, 5, 1, RngStream(1))
    buf = io.StringIO()
    write_events_csv(buf, [(0, ev[0])])
    assert buf.getvalue().splitlines()[1].startswith("0,1,")

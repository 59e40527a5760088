import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overshoot_lab import (
    GuardExceeded,
    InsufficientSamples,
    LatticePmf,
    compose_check,
    detailed_balance_p_mc,
    detailed_balance_q,
    p_kernel_mc,
    pi_plus,
    q_kernel_lattice,
    support_coverage,
    time_reversal_check,
)
from overshoot_lab.kernels import p_matrix_mc


@st.composite
def mean_zero_lattice(draw):
    """Mixtures of two-point laws {-a, b} with weights b/(a+b), a/(a+b)."""
    parts = draw(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5)), min_size=1, max_size=3))
    law: dict[int, Fraction] = {}
    total = sum(w for _, _, w in parts)
    for a, b, w in parts:
        wt = Fraction(w, total)
        law[-a] = law.get(-a, 0) + wt * Fraction(b, a + b)
        law[b] = law.get(b, 0) + wt * Fraction(a, a + b)
    atoms = sorted(law)
    return LatticePmf(atoms, [law[k] for k in atoms])


# -- exact Q --------------------------------------------------------------------


def test_q_uniform4_by_hand(uniform4):
    q = q_kernel_lattice(uniform4)
    assert q.states == (0.0, 1.0)
    # Q(x, y) = P(X = x + y + 1) / P(X >= x + 1)
    assert q.exact == ((Fraction(1, 2), Fraction(1, 2)), (Fraction(1), Fraction(0)))
    assert detailed_balance_q(uniform4) == 0.0


def test_q_empty_rows_go_to_zero(uniform4):
    q = q_kernel_lattice(uniform4, K=3)
    # P(X >= 3) = 0, so states 2 and 3 restart at 0
    assert q.prob(2, 0) == 1.0
    assert q.prob(3, 0) == 1.0
    assert np.all(q.deficit == 0)


def test_q_unit_walk_is_point_mass(unit_walk):
    q = q_kernel_lattice(unit_walk)
    assert q.states == (0.0,)
    assert q.matrix.tolist() == [[1.0]]


@given(spec=mean_zero_lattice())
@settings(max_examples=40, deadline=None)
def test_q_is_reversible_for_pi_plus(spec):
    assert detailed_balance_q(spec) == 0.0


@given(spec=mean_zero_lattice())
@settings(max_examples=40, deadline=None)
def test_pi_plus_is_invariant_for_q(spec):
    q = q_kernel_lattice(spec, K=spec.m_plus - spec.span_d)
    m = pi_plus(spec)
    d = spec.span
    pi = [Fraction(0)] * len(q.states)
    for a, p in zip(m.atoms, m.masses):
        pi[int(a / d)] = p
    n = len(q.states)
    image = [sum(pi[i] * q.exact[i][j] for i in range(n)) for j in range(n)]
    assert image == pi
    # rows are exactly stochastic once K covers the support
    assert all(sum(r) == 1 for r in q.exact)


def test_q_requires_lattice(laplace):
    with pytest.raises(TypeError):
        q_kernel_lattice(laplace)
    with pytest.raises(ValueError):
        q_kernel_lattice(LatticePmf([-1, 1], ["0.5", "0.5"]), K=-1)


def test_kernel_csv_and_lookup(uniform4):
    q = q_kernel_lattice(uniform4)
    buf = io.StringIO()
    q.to_csv(buf)
    assert buf.getvalue().splitlines() == ["x,y,prob", "0,0,0.5", "0,1,0.5", "1,0,1"]
    with pytest.raises(KeyError):
        q.prob(0.5, 0)


# -- Monte Carlo P ----------------------------------------------------------------


def test_p_unit_walk_is_point_mass(unit_walk):
    for x in (0, 3):
        emp = p_kernel_mc(unit_walk, x, 500, 1, tag=x)
        assert emp.probs() == {0.0: 1.0}


def test_pi_plus_is_invariant_for_p(uniform4):
    P = p_matrix_mc(uniform4, [0, 1], 50_000, 2)
    assert np.allclose(P.sum(axis=1), 1.0)
    pi = np.array([2 / 3, 1 / 3])
    assert np.abs(pi @ P - pi).sum() / 2 < 0.01


def test_p_kernel_guard_handling(pareto):
    with pytest.raises(GuardExceeded):
        p_kernel_mc(pareto, 100.0, 50, 3, guard=5)
    emp = p_kernel_mc(pareto, 100.0, 50, 3, guard=5, censored="drop")
    assert emp.n < 50
    with pytest.raises(ValueError):
        p_kernel_mc(pareto, 1.0, 5, 3, censored="ignore")


def test_compose_matches_simulation(uniform4):
    for n in (1, 3):
        assert compose_check(uniform4, 10, n, 50_000, 4, tag=10 * n) < 0.015
    with pytest.raises(ValueError):
        compose_check(uniform4, 0, 0, 10, 4)


def test_p_fluxes_balance(uniform4):
    (pair,) = detailed_balance_p_mc(uniform4, [(0, 1)], 20_000, 5)
    assert pair.overlap
    assert pair.ci_ab[0] <= pair.flux_ab <= pair.ci_ab[1]
    assert min(pair.counts) >= 100


def test_p_fluxes_need_counts(uniform4):
    with pytest.raises(InsufficientSamples):
        detailed_balance_p_mc(uniform4, [(0, 1)], 100, 6)


def test_p_fluxes_continuous_buckets(laplace):
    (pair,) = detailed_balance_p_mc(laplace, [((0.0, 0.5), (1.0, 2.0))], 20_000, 7, guard=10**6)
    assert pair.overlap


# -- time reversal and support --------------------------------------------------------


def test_reversal_laplace(laplace):
    rep = time_reversal_check(laplace, 10_000, 8, n_null=100)
    assert rep.marginals_pass
    assert rep.joint_pass
    assert set(rep.p_values) == {"start", "undershoot", "time", "max"}


def test_reversal_lattice(asym3):
    rep = time_reversal_check(asym3, 10_000, 9, n_null=100, guard=10**7)
    assert rep.passed


def test_reversal_needs_samples(laplace):
    with pytest.raises(InsufficientSamples):
        time_reversal_check(laplace, 100, 1)


def test_support_coverage(uniform4, laplace):
    assert support_coverage(uniform4, [0, 7], 5000, 10) == {0.0: [], 7.0: []}
    cov = support_coverage(laplace, [0.0, 5.0], 20_000, 11, guard=10**6)
    assert all(not missed for missed in cov.values())

import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps
from scipy.integrate import quad

from overshoot_lab import (
    GaussMix,
    Laplace,
    LadderLaws,
    LatticePmf,
    RngStream,
    SymmetricPareto,
    TruncationTooSmall,
    far_level_down_law,
    far_level_up_law,
    ladder_batch,
    ladder_normalization,
    pi_h,
    pi_minus,
    pi_plus,
    pi_plus_via_ladder,
    sample_measure,
    wiener_hopf_residual,
)


def unit_ladders():
    # +-1 walk: H+ = 1, H- = -1, weak H- is 0 or -1 with equal odds
    return LadderLaws(1.0, {1: 1.0}, {-1: 1.0}, {0: 0.5, -1: 0.5}, n=0)


def tv(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# -- closed forms on lattices -----------------------------------------------------


def test_pi_plus_unit_walk_is_point_mass(unit_walk):
    assert pi_plus(unit_walk).pmf() == {0.0: 1.0}
    assert pi_minus(unit_walk).pmf() == {-1.0: 1.0}


def test_pi_plus_uniform4_exact(uniform4):
    m = pi_plus(uniform4)
    # c1 = 4/3; masses c1 * P(X > y) for y = 0, 1
    assert m.masses == (Fraction(2, 3), Fraction(1, 3))
    assert m.normalizer_exact == Fraction(4, 3)
    assert pi_minus(uniform4).pmf() == pytest.approx({-2.0: 1 / 3, -1.0: 2 / 3})


def test_pi_plus_asymmetric_exact(asym3):
    m = pi_plus(asym3)
    assert dict(zip(m.atoms, m.masses)) == {0: Fraction(2, 3), 1: Fraction(1, 6), 2: Fraction(1, 6)}
    assert m.normalizer_exact == Fraction(1)
    mm = pi_minus(asym3)
    assert dict(zip(mm.atoms, mm.masses)) == {-3: Fraction(1, 3), -2: Fraction(1, 3), -1: Fraction(1, 3)}


def test_pi_h_unit_walk(unit_walk):
    assert pi_h(unit_walk, 1).pmf() == {0.0: 0.5, 1.0: 0.5}


def test_lattice_with_fractional_span():
    s = LatticePmf(["-0.5", "1"], ["2/3", "1/3"])
    m = pi_plus(s)
    assert sum(m.masses) == 1
    assert all((a / s.span).denominator == 1 for a in m.atoms)
    assert m.density(0.25) == 0.0


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


@given(spec=mean_zero_lattice())
@settings(max_examples=40, deadline=None)
def test_lattice_measures_are_normalised_tails(spec):
    c1 = 2 / spec.mean_abs_exact()
    for measure, tail in ((pi_plus(spec), spec.tail_upper_exact), (pi_minus(spec), spec.tail_lower_exact)):
        assert sum(measure.masses) == 1
        for a, p in zip(measure.atoms, measure.masses):
            assert p == c1 * spec.span * tail(a)


@given(spec=mean_zero_lattice(), hu=st.integers(1, 8))
@settings(max_examples=40, deadline=None)
def test_entrance_measure_normalised(spec, hu):
    m = pi_h(spec, hu * spec.span)
    assert sum(m.masses) == 1
    assert all(0 <= a <= hu * spec.span for a in m.atoms)


# -- continuous laws --------------------------------------------------------------


def test_laplace_pi_plus_is_exponential(laplace):
    m = pi_plus(laplace)
    ys = np.linspace(0, 8, 17)
    assert np.allclose(m.density(ys), np.exp(-ys), rtol=1e-12)
    assert np.allclose(m.cdf(ys), 1 - np.exp(-ys), atol=1e-12)
    assert np.allclose(pi_minus(laplace).cdf(-ys), np.exp(-ys), atol=1e-12)


@pytest.mark.parametrize("spec", [Laplace(0.7), SymmetricPareto(1.5), GaussMix([(0.5, -1, 0.5), (0.5, 1, 0.7)])])
def test_continuous_densities_integrate_to_one(spec):
    for m in (pi_plus(spec), pi_minus(spec)):
        lo, hi = (0, np.inf) if m.kind == "pi_plus" else (-np.inf, 0)
        total, _ = quad(lambda y: float(m.density(y)), lo, hi, limit=500)
        assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("spec", [Laplace(1.0), SymmetricPareto(1.5), GaussMix([(0.25, -3, 1), (0.75, 1, 0.5)])])
def test_cdf_matches_quadrature_of_density(spec):
    for m in (pi_plus(spec), pi_minus(spec), pi_h(spec, 1.5)):
        base = {"pi_plus": 0.0, "pi_minus": -np.inf, "pi_h": 0.0}[m.kind]
        for y in (-0.5, 0.3, 1.0, 2.5) if m.kind != "pi_plus" else (0.3, 1.0, 2.5, 10.0):
            if m.kind == "pi_minus" and y >= 0:
                continue
            if m.kind == "pi_h" and y < 0:
                continue
            num, _ = quad(lambda t: float(m.density(t)), base, y, limit=200)
            assert m.cdf(y) == pytest.approx(num, abs=1e-7)


def test_entrance_density_closed_form(laplace):
    h = 2.0
    m = pi_h(laplace, h)
    total, _ = quad(lambda y: float(m.density(y)), 0, h)
    assert total == pytest.approx(1.0, abs=1e-10)
    # 1 - P(y - h <= X <= y) for Laplace(1)
    F = lambda x: sps.laplace.cdf(x)
    y = 0.7
    assert m.density(y) / m.density(1.3) == pytest.approx((1 - F(y) + F(y - h)) / (1 - F(1.3) + F(1.3 - h)), rel=1e-12)


def test_pi_h_rejects_bad_windows(laplace, uniform4):
    for h in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            pi_h(laplace, h)
    with pytest.raises(ValueError):
        pi_h(uniform4, 1.5)


@pytest.mark.parametrize("spec", [Laplace(1.0), SymmetricPareto(1.5)])
def test_quantile_inverts_cdf(spec):
    m = pi_plus(spec)
    u = np.array([0.0, 0.01, 0.3, 0.5, 0.9, 0.999])
    y = m.quantile(u)
    assert np.allclose(m.cdf(y), u, atol=1e-9)
    with pytest.raises(ValueError):
        m.quantile(1.5)


def test_bin_masses_sum(uniform4, laplace):
    assert pi_plus(uniform4).bin_masses([-0.5, 0.5, 1.5]).tolist() == pytest.approx([2 / 3, 1 / 3])
    edges = np.linspace(0, 40, 81)
    assert pi_plus(laplace).bin_masses(edges).sum() == pytest.approx(1.0, abs=1e-12)


# -- sampling ----------------------------------------------------------------------


def test_sample_measure_laplace(laplace):
    x = sample_measure(pi_plus(laplace), RngStream(1), 20_000)
    assert sps.kstest(x, "expon").pvalue > 1e-3


def test_sample_measure_pareto_against_cdf(pareto):
    m = pi_plus(pareto)
    x = sample_measure(m, RngStream(2), 20_000)
    assert np.all(x >= 0)
    assert sps.kstest(x, m.cdf).pvalue > 1e-3


def test_sample_measure_lattice_frequencies(asym3):
    x = sample_measure(pi_plus(asym3), RngStream(3), 60_000)
    for atom, p in ((0.0, 2 / 3), (1.0, 1 / 6), (2.0, 1 / 6)):
        assert abs(np.mean(x == atom) - p) < 4 * math.sqrt(p * (1 - p) / 60_000)
    assert sample_measure(pi_plus(asym3), RngStream(3), 0).size == 0


# -- ladder constructions ------------------------------------------------------------


def test_ladder_constructions_on_exact_unit_laws(unit_walk):
    laws = unit_ladders()
    assert pi_plus_via_ladder(laws, unit_walk) == pytest.approx({0.0: 1.0})
    assert wiener_hopf_residual(laws, unit_walk) == pytest.approx(0.0, abs=1e-15)
    assert far_level_down_law(laws, unit_walk) == {-1.0: 1.0}
    assert far_level_up_law(laws, unit_walk) == {0.0: 1.0}
    assert ladder_normalization(laws, unit_walk) == pytest.approx((1.0, 1.0))


def test_ladder_constructions_from_simulation(uniform4):
    b = ladder_batch(uniform4, 100_000, 4)
    via = pi_plus_via_ladder(b, uniform4)
    assert tv(via, pi_plus(uniform4).pmf()) < 0.01
    assert wiener_hopf_residual(b, uniform4) < 0.01
    lhs, rhs = ladder_normalization(b, uniform4)
    assert lhs == pytest.approx(rhs, abs=0.02)
    # remote-level laws are proper probability laws
    assert sum(far_level_down_law(b, uniform4).values()) == pytest.approx(1.0)
    assert sum(far_level_up_law(b, uniform4).values()) == pytest.approx(1.0)


def test_ladder_inputs_validated(uniform4, laplace):
    with pytest.raises(ValueError):
        pi_plus_via_ladder(LadderLaws(1.0), uniform4)
    with pytest.raises(ValueError):
        pi_plus_via_ladder(LadderLaws(1.0, {-1: 1.0}, {-1: 1.0}, {0: 1.0}), uniform4)
    with pytest.raises(ValueError):
        LadderLaws.from_samples(laplace, [1.0], [-1.0], [0.0])
    with pytest.raises(ValueError):
        pi_plus_via_ladder([], uniform4)


def test_truncation_too_small(uniform4):
    b = ladder_batch(uniform4, 10_000, 5)
    with pytest.raises(TruncationTooSmall):
        pi_plus_via_ladder(b, uniform4, window=1)
    with pytest.raises(TruncationTooSmall):
        wiener_hopf_residual(b, uniform4, window=(0, 0))


# -- output --------------------------------------------------------------------------


def test_to_csv(uniform4, laplace):
    buf = io.StringIO()
    pi_plus(uniform4).to_csv(buf)
    assert buf.getvalue().splitlines() == ["y,density", "0,0.66666666666666663", "1,0.33333333333333331"]
    with pytest.raises(ValueError):
        pi_plus(laplace).to_csv(io.StringIO())
    buf = io.StringIO()
    pi_plus(laplace).to_csv(buf, grid=[0.0, 1.0])
    assert buf.getvalue().splitlines()[2].startswith("1,0.3678794411714")

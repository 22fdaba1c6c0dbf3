import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from singleshot import (
    DiagonalState,
    Spectrum,
    ThermalContext,
    entropy,
    free_energy,
    partition_function,
    thermal_free_energy,
)
from singleshot.extraction import epsilon_cut, f_min_epsilon, max_work, multilevel_surplus
from singleshot.formation import formation_mu_epsilon
from singleshot.shells import Block, BlockTable

from conftest import ideal_model

betas = st.floats(0.05, 5.0)
epsilons = st.floats(0.0, 0.95)


@st.composite
def diagonal_states(draw, max_levels=4):
    energies = sorted(draw(st.sets(st.integers(0, 6), min_size=1, max_size=max_levels)))
    levels = [(e, draw(st.integers(1, 2))) for e in energies]
    spec = Spectrum(draw(st.sampled_from([0.5, 1.0, 2.0])), levels)
    weights = draw(st.lists(st.integers(0, 20), min_size=spec.dimension, max_size=spec.dimension))
    assume(sum(weights) > 0)
    total = sum(weights)
    return DiagonalState(spec, [Fraction(w, total) for w in weights])


@st.composite
def block_tables(draw):
    n = draw(st.integers(1, 5))
    counts = draw(st.lists(st.integers(1, 8), min_size=n, max_size=n))
    values = sorted(draw(st.lists(st.integers(1, 30), min_size=n, max_size=n)), reverse=True)
    total = sum(c * v for c, v in zip(counts, values))
    blocks = tuple(
        Block((i, 1), Fraction(v, total), c, Fraction(c * v, total))
        for i, (c, v) in enumerate(zip(counts, values))
    )
    return BlockTable(0, blocks, "concrete")


class TestFreeEnergy:
    @given(diagonal_states(), betas)
    def test_thermal_state_minimizes(self, state, beta):
        ctx = ThermalContext(beta)
        assert free_energy(state, ctx) >= thermal_free_energy(state.spectrum, ctx) - 1e-12

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.randoms(use_true_random=False))
    def test_entropy_permutation_invariant(self, weights, rnd):
        spec = Spectrum(1.0, [(0, len(weights))])
        p = np.array(weights) / math.fsum(weights)
        q = p.copy()
        rnd.shuffle(q)
        assert entropy(DiagonalState(spec, p.tolist())) == pytest.approx(entropy(DiagonalState(spec, q.tolist())), abs=1e-12)

    @given(diagonal_states(), betas, st.integers(0, 10))
    def test_partition_function_shift(self, state, beta, shift):
        ctx = ThermalContext(beta)
        spec = state.spectrum
        z = partition_function(spec, ctx)
        shifted = partition_function(spec.shifted(shift), ctx)
        assert shifted == pytest.approx(z * math.exp(-beta * shift * spec.quantum), rel=1e-12)


class TestWorkProperties:
    @settings(max_examples=200)
    @given(diagonal_states(), betas, epsilons, epsilons)
    def test_monotone_in_epsilon(self, state, beta, e1, e2):
        lo, hi = sorted((e1, e2))
        m = ideal_model(state, beta)
        assert max_work(m, lo).w_max <= max_work(m, hi).w_max + 1e-12

    @given(diagonal_states(), betas, epsilons)
    def test_identity_forms_agree(self, state, beta, eps):
        rep = max_work(ideal_model(state, beta), eps)
        assert rep.w_max == pytest.approx(rep.w_max_t_form, abs=1e-12)
        assert rep.w_max >= -1e-12

    @given(diagonal_states(), betas)
    def test_perfect_work_below_free_energy_gap(self, state, beta):
        ctx = ThermalContext(beta)
        assert f_min_epsilon(state, ctx, 0.0) <= free_energy(state, ctx) + 1e-12

    @given(betas, st.floats(0.001, 2.0), st.integers(0, 200))
    def test_window_never_loses(self, beta, spacing, n):
        assert multilevel_surplus(ThermalContext(beta), n * spacing, spacing) >= (0.0 if n else -1e-15)
        if n:
            assert multilevel_surplus(ThermalContext(beta), n * spacing, spacing) > 0


class TestCutProperties:
    @given(block_tables(), st.floats(0.0, 0.99))
    def test_coverage_and_minimality(self, table, eps):
        cut = epsilon_cut(table, eps)
        need = (1 - Fraction(eps)) * table.total_mass
        assert cut.included_mass >= need
        smallest = min(b.value for b in table if cut.h_map[b.level] > 0)
        assert cut.included_mass - smallest < need

    @given(block_tables(), st.floats(0.0, 0.99))
    def test_tie_order_does_not_change_dimension(self, table, eps):
        # reverse the order inside every run of equal values
        runs, out = {}, []
        for b in table:
            runs.setdefault(b.value, []).append(b)
        for v in sorted(runs, reverse=True):
            out.extend(reversed(runs[v]))
        swapped = BlockTable(0, tuple(out), "concrete")
        assert epsilon_cut(swapped, eps).d_ini == epsilon_cut(table, eps).d_ini

    @given(block_tables(), st.floats(0.0, 0.99), st.floats(0.0, 0.99))
    def test_dimension_monotone(self, table, e1, e2):
        lo, hi = sorted((e1, e2))
        assert epsilon_cut(table, hi).d_ini <= epsilon_cut(table, lo).d_ini


class TestFormationProperties:
    @settings(max_examples=200)
    @given(diagonal_states(), betas, epsilons, epsilons)
    def test_mu_epsilon_monotone(self, state, beta, e1, e2):
        lo, hi = sorted((e1, e2))
        ctx = ThermalContext(beta)
        a = formation_mu_epsilon(state, ctx, lo).mu_epsilon
        b = formation_mu_epsilon(state, ctx, hi).mu_epsilon
        assert b <= a + 1e-9
        assert b >= 1.0

    @given(diagonal_states(), betas, st.floats(0.001, 0.95))
    def test_bisection_and_closed_form(self, state, beta, eps):
        rep = formation_mu_epsilon(state, ThermalContext(beta), eps)
        # ratios reach 1e26 here, where adjacent doubles are further apart than 1e-9
        assert rep.mu_epsilon == pytest.approx(rep.mu_epsilon_closed_form, abs=1e-9, rel=1e-12)

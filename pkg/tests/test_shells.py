import math
from fractions import Fraction

import pytest

from singleshot import (
    CompositeModel,
    ConcreteBath,
    ContractError,
    DiagonalState,
    SizeCapError,
    Spectrum,
    ThermalContext,
    WeightModel,
    admissible_shells,
    enumerate_shells,
    final_dimension,
    initial_blocks,
    truncation_tail,
)
from singleshot.shells import (
    IdealBath,
    initial_dimension,
    shell_basis,
    shell_population,
)

from conftest import concrete_model, ideal_model

LN2 = math.log(2)


def explicit_bath(levels):
    return ConcreteBath(Spectrum(1.0, levels))


class TestConcreteBath:
    def test_exponential_validates(self):
        bath = ConcreteBath.exponential(1.0, 3, 4, m0=2)
        assert bath.validate(ThermalContext(math.log(3))) == 3
        assert bath.multiplicity(4) == 2 * 81

    def test_non_power_multiplicity_named(self):
        bath = explicit_bath([(0, 1), (1, 2), (2, 3)])
        with pytest.raises(ContractError, match="expected M0\\*k\\^n = 4"):
            bath.validate(ThermalContext(LN2))

    def test_non_integer_base(self):
        with pytest.raises(ContractError, match="not an integer"):
            ConcreteBath.exponential(1.0, 2, 3).validate(ThermalContext(1.0))

    def test_gap_in_ladder(self):
        with pytest.raises(ContractError, match="contiguous"):
            explicit_bath([(0, 1), (2, 4)]).validate(ThermalContext(LN2))

    def test_state_probability_is_exact(self):
        bath = ConcreteBath.exponential(1.0, 2, 3)
        ctx = ThermalContext(LN2)
        total = sum(bath.multiplicity(n) * bath.state_probability(n, ctx) for n in range(4))
        assert total == 1
        assert bath.state_probability(2, ctx) == Fraction(1, 16)

    def test_model_rejects_mismatched_quantum(self):
        st = DiagonalState.pure(Spectrum(0.5, [(0, 1)]), (0, 1))
        with pytest.raises(ContractError, match="quantum"):
            CompositeModel(st, ConcreteBath.exponential(1.0, 2, 3), WeightModel(), ThermalContext(LN2))


class TestEnumerateShells:
    def test_trivial_two_shells(self):
        st = DiagonalState.pure(Spectrum(1.0, [(0, 1)]), (0, 1))
        m = CompositeModel(st, explicit_bath([(0, 1)]), WeightModel(1, 1), ThermalContext(LN2))
        shells = enumerate_shells(m)
        assert [(s.energy, s.dimension) for s in shells] == [(0, 1), (1, 1)]

    def test_degenerate_counting(self):
        st = DiagonalState(Spectrum(1.0, [(0, 2)]), [0.5, 0.5])
        m = CompositeModel(st, explicit_bath([(0, 1), (1, 2)]), WeightModel(1, 0), ThermalContext(LN2))
        assert [(s.energy, s.dimension) for s in enumerate_shells(m)] == [(0, 2), (1, 4)]

    @pytest.mark.parametrize("base,top,wl", [(2, 4, 1), (3, 3, 2), (2, 5, 3)])
    def test_partition_of_product_space(self, qubit, base, top, wl):
        m = concrete_model(DiagonalState.uniform(qubit), base=base, bath_top=top, weight_levels=wl)
        dims = sum(s.dimension for s in enumerate_shells(m))
        assert dims == qubit.dimension * m.bath.spectrum.dimension * (wl + 1)

    def test_population_sums_to_one(self, qubit):
        m = concrete_model(DiagonalState(qubit, ["1/3", "2/3"]), bath_top=4)
        assert sum((s.population for s in enumerate_shells(m)), Fraction(0)) == 1

    def test_size_cap(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=8, shell_cap=64)
        with pytest.raises(SizeCapError, match="shell E="):
            enumerate_shells(m)


class TestAdmissibleWindow:
    def test_window_bounds(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=6, weight_levels=2)
        assert list(admissible_shells(m)) == [3, 4, 5, 6]

    def test_truncation_narrows(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=6, weight_levels=2, truncation=4)
        assert list(admissible_shells(m)) == [3, 4]

    def test_too_short_bath(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=2, weight_levels=2)
        with pytest.raises(ContractError, match="too short"):
            admissible_shells(m)

    def test_tail_matches_excluded_shells(self, qubit):
        m = concrete_model(DiagonalState(qubit, ["1/4", "3/4"]), bath_top=5, weight_levels=1)
        inside = sum(shell_population(m, e) for e in admissible_shells(m))
        assert truncation_tail(m) == pytest.approx(float(1 - inside), abs=1e-15)
        assert 0 < truncation_tail(m) < 1


class TestFinalDimension:
    def test_worked_example(self, degenerate_pair):
        m = concrete_model(DiagonalState.pure(degenerate_pair, (0, 1)), bath_top=6)
        assert final_dimension(m, 3, (1, 1)) == 8

    def test_window_of_one_level_matches_single(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=7, weight_levels=3)
        for e in admissible_shells(m):
            single = sum(final_dimension(m, e, (w, w)) for w in (1, 2, 3))
            assert final_dimension(m, e, (1, 3)) == single

    def test_exact_growth_inside_window(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), base=3, bath_top=6, weight_levels=2)
        for e in admissible_shells(m):
            # M_B(E) * Z_S * k**-w with Z_S = 1 + 1/3
            assert Fraction(final_dimension(m, e, (2, 2))) == Fraction(3**e) * Fraction(4, 3) / 9

    def test_ideal_ratio_is_shell_independent(self, qubit):
        m = ideal_model(DiagonalState.uniform(qubit), beta=0.8, weight_levels=2)
        ratios = [final_dimension(m, e, (1, 2)) / math.exp(0.8 * e) for e in (3, 7, 20)]
        assert ratios == pytest.approx([ratios[0]] * 3, rel=1e-12)

    @pytest.mark.parametrize("window", [(2, 1), (-1, 1)])
    def test_bad_window(self, qubit, window):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=5, weight_levels=2)
        with pytest.raises(ContractError):
            final_dimension(m, 4, window)

    def test_off_grid_window(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=6, weight_levels=2, spacing=2)
        with pytest.raises(ContractError, match="off the weight grid"):
            final_dimension(m, 5, (1, 1))


class TestShellBasis:
    def test_labels_cover_dimension(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=4, weight_levels=1)
        basis = shell_basis(m, 3)
        labels = list(basis.labels())
        assert len(labels) == basis.dimension
        assert all(key[0] + e_b + e_w == 3 for key, e_b, _, e_w in labels)

    def test_initial_dimension(self, qubit):
        m = concrete_model(DiagonalState.uniform(qubit), bath_top=4)
        assert initial_dimension(m, 3) == 8 + 4


class TestInitialBlocks:
    def test_two_equal_count_blocks(self, degenerate_pair):
        m = concrete_model(DiagonalState(degenerate_pair, ["9/10", "1/10"]), bath_top=5)
        table = initial_blocks(m, 3)
        assert [b.count for b in table] == [8, 8]
        assert table.blocks[0].mass / table.blocks[1].mass == 9
        assert table.total_mass == shell_population(m, 3)

    def test_zero_population_block_absent(self, qubit):
        m = concrete_model(DiagonalState.pure(qubit, (1, 1)), bath_top=4)
        assert [b.level for b in initial_blocks(m, 3)] == [(1, 1)]

    def test_tie_order(self, qubit):
        # lambda_0 / M_B(3) == lambda_1 / M_B(2) at k = 2: equal block values
        m = concrete_model(DiagonalState(qubit, ["2/3", "1/3"]), bath_top=4)
        table = initial_blocks(m, 3)
        assert table.blocks[0].value == table.blocks[1].value
        assert [b.level for b in table] == [(0, 1), (1, 1)]

    def test_values_nonincreasing(self):
        spec = Spectrum(1.0, [(0, 1), (1, 2), (2, 1)])
        m = concrete_model(DiagonalState(spec, ["1/10", "2/5", "1/5", "3/10"]), base=3, bath_top=5)
        vals = [b.value for b in initial_blocks(m, 4)]
        assert vals == sorted(vals, reverse=True)

    def test_ideal_blocks(self, degenerate_pair):
        m = CompositeModel(DiagonalState(degenerate_pair, [0.9, 0.1]), IdealBath(), WeightModel(), ThermalContext(1.0))
        table = initial_blocks(m)
        assert table.mode == "ideal"
        assert [b.count for b in table] == [1.0, 1.0]
        assert [b.mass for b in table] == [0.9, 0.1]

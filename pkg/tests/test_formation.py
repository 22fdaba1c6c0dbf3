import math

import numpy as np
import pytest

from singleshot import ContractError, DiagonalState, Spectrum, ThermalContext, thermal_state, trace_distance_diag
from singleshot.extraction import max_work
from singleshot.formation import (
    excess_mass,
    formation_feasible,
    formation_mu,
    formation_mu_epsilon,
    interpolate_to_thermal,
    mu_epsilon_bisection,
    mu_epsilon_closed_form,
)

from conftest import ideal_model

# independent high-precision values at beta = 1 on {(0,1),(1,1)}
Z_QUBIT = 1.36787944117144233
W_GROUND = 0.313261687518222834
MU_HALF = 1.85914091422952262
W_MIN_HALF = 0.62011450695827752
MU_HALF_EPS01 = 1.48731273138361809


class TestFormationMu:
    def test_thermal_target(self, qubit, beta1):
        rep = formation_mu(thermal_state(qubit, beta1), beta1)
        assert rep.mu == pytest.approx(1.0, abs=1e-15)
        assert rep.w_min == pytest.approx(0.0, abs=1e-15)

    def test_pure_ground(self, qubit, beta1):
        rep = formation_mu(DiagonalState.pure(qubit, (0, 1)), beta1)
        assert rep.mu == pytest.approx(Z_QUBIT, rel=1e-14)
        assert rep.w_min == pytest.approx(W_GROUND, rel=1e-14)
        assert rep.binding_level == (0, 1)

    def test_uniform(self, qubit, beta1):
        rep = formation_mu(DiagonalState(qubit, [0.5, 0.5]), beta1)
        assert rep.mu == pytest.approx(MU_HALF, rel=1e-14)
        assert rep.w_min == pytest.approx(W_MIN_HALF, rel=1e-13)
        assert rep.binding_level == (1, 1)

    def test_tie_goes_to_smallest_label(self, degenerate_pair, beta1):
        assert formation_mu(DiagonalState.uniform(degenerate_pair), beta1).binding_level == (0, 1)

    def test_mu_at_least_one(self, qubit, beta1):
        for p in np.linspace(0, 1, 11):
            assert formation_mu(DiagonalState(qubit, [p, 1 - p]), beta1).mu >= 1 - 1e-15

    def test_asymmetry_witness(self, qubit, beta1):
        st = DiagonalState(qubit, [0.5, 0.5])
        assert formation_mu(st, beta1).w_min > 0.6
        assert max_work(ideal_model(st), 0.0).w_max == 0.0


class TestMuEpsilon:
    def test_epsilon_zero_is_mu(self, qubit, beta1):
        st = DiagonalState(qubit, [0.5, 0.5])
        rep = formation_mu_epsilon(st, beta1, 0.0)
        assert rep.mu_epsilon == rep.mu
        assert rep.relaxed_state is st

    def test_closed_form_example(self, qubit, beta1):
        rep = formation_mu_epsilon(DiagonalState(qubit, [0.5, 0.5]), beta1, 0.1)
        assert rep.mu_epsilon_closed_form == pytest.approx(MU_HALF_EPS01, rel=1e-14)
        assert rep.mu_epsilon == pytest.approx(MU_HALF_EPS01, abs=1e-9)

    def test_thermal_reachable(self, qubit, beta1):
        st = DiagonalState(qubit, [0.5, 0.5])
        r1 = excess_mass(st.probabilities(), thermal_state(qubit, beta1).probabilities(), 1.0)
        assert formation_mu_epsilon(st, beta1, r1 + 1e-3).mu_epsilon == 1.0

    @pytest.mark.parametrize("eps", [0.01, 0.1, 0.3, 0.6])
    def test_relaxed_state(self, eps):
        spec = Spectrum(1.0, [(0, 1), (1, 2), (3, 1)])
        ctx = ThermalContext(0.8)
        target = DiagonalState(spec, [0.1, 0.2, 0.3, 0.4])
        rep = formation_mu_epsilon(target, ctx, eps)
        t = thermal_state(spec, ctx).probabilities()
        assert trace_distance_diag(rep.relaxed_state, target) <= eps + 1e-9
        assert np.all(rep.relaxed_state.probabilities() <= rep.mu_epsilon * t + 1e-9)

    def test_bisection_matches_closed_form(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            s = rng.dirichlet(np.ones(4))
            t = rng.dirichlet(np.ones(4))
            eps = rng.uniform(0, 0.9)
            assert mu_epsilon_bisection(s, t, eps) == pytest.approx(mu_epsilon_closed_form(s, t, eps), abs=1e-9)

    def test_excess_mass_convex_nonincreasing(self):
        s, t = np.array([0.7, 0.2, 0.1]), np.array([0.2, 0.3, 0.5])
        lams = np.linspace(1, 4, 61)
        r = np.array([excess_mass(s, t, x) for x in lams])
        assert np.all(np.diff(r) <= 1e-15)
        assert np.all(np.diff(r, 2) >= -1e-12)

    @pytest.mark.parametrize("eps", [-0.1, 1.0])
    def test_bad_epsilon(self, qubit, beta1, eps):
        with pytest.raises(ContractError):
            formation_mu_epsilon(DiagonalState(qubit, [0.5, 0.5]), beta1, eps)


class TestFeasibility:
    def test_tight_at_w_min(self, qubit, beta1):
        st = DiagonalState(qubit, [0.5, 0.5])
        rep = formation_mu(st, beta1)
        v = formation_feasible(st, rep.w_min, beta1)
        assert v.feasible
        assert v.margins[rep.binding_level] == pytest.approx(0.0, abs=1e-12)

    def test_below_w_min(self, qubit, beta1):
        st = DiagonalState(qubit, [0.5, 0.5])
        rep = formation_mu(st, beta1)
        v = formation_feasible(st, rep.w_min - 0.01, beta1)
        assert not v.feasible
        assert v.binding_level == rep.binding_level

    def test_thermal_at_zero(self, qubit, beta1):
        assert formation_feasible(thermal_state(qubit, beta1), 0.0, beta1).feasible


class TestInterpolation:
    def test_mu_decreases_toward_thermal(self, qubit, beta1):
        st = DiagonalState.pure(qubit, (1, 1))
        mus = [formation_mu(interpolate_to_thermal(st, beta1, x), beta1).mu for x in np.linspace(0, 1, 11)]
        assert all(a >= b - 1e-12 for a, b in zip(mus, mus[1:]))
        assert mus[-1] == pytest.approx(1.0, abs=1e-12)
        assert math.log(mus[0]) == pytest.approx(1.313261687518222834, rel=1e-13)

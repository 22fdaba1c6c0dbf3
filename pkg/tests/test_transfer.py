import math

import numpy as np
import pytest

from singleshot import ContractError, DiagonalState, Spectrum, ThermalContext, thermal_state
from singleshot.transfer import (
    check_transfer,
    classify_weight_transfer,
    state_free_energy,
    transfer_quantity,
)

W_GROUND = 0.313261687518222834


@pytest.fixture
def ladder():
    return Spectrum(1.0, [(n, 1) for n in range(5)])


def level(ladder, n):
    return DiagonalState.pure(ladder, (n, 1))


class TestTransferQuantity:
    @pytest.mark.parametrize("n", [0, 1, 3])
    def test_pure_to_pure(self, ladder, beta1, n):
        assert transfer_quantity(level(ladder, 0), level(ladder, n), ladder, beta1) == pytest.approx(n, abs=1e-15)

    def test_rigid_shift(self, ladder, beta1):
        a = DiagonalState(ladder, [0.5, 0.3, 0.2, 0, 0])
        b = DiagonalState(ladder, [0, 0, 0.5, 0.3, 0.2])
        assert transfer_quantity(a, b, ladder, beta1) == pytest.approx(2.0, rel=1e-14)
        assert classify_weight_transfer(a, b) == "shift"

    def test_to_thermal(self, ladder):
        ctx = ThermalContext(0.5)
        got = transfer_quantity(level(ladder, 0), thermal_state(ladder, ctx), ladder, ctx)
        z = sum(math.exp(-0.5 * n) for n in range(5))
        assert got == pytest.approx(-math.log(z) / 0.5, rel=1e-13)
        assert got < 0

    def test_dense_matches_diagonal(self, ladder, beta1):
        a = DiagonalState(ladder, [0.1, 0.2, 0.3, 0.2, 0.2])
        assert state_free_energy(np.diag(a.probabilities()), ladder, beta1) == pytest.approx(
            state_free_energy(a, ladder, beta1), rel=1e-13)

    def test_shape_mismatch(self, ladder, beta1):
        with pytest.raises(ContractError):
            state_free_energy(np.eye(2) / 2, ladder, beta1)


class TestClassify:
    def test_tags(self, ladder):
        window = DiagonalState(ladder, [0, 0.5, 0.5, 0, 0])
        assert classify_weight_transfer(level(ladder, 0), level(ladder, 2)) == "single-level"
        assert classify_weight_transfer(level(ladder, 0), window) == "single-to-window"
        general = DiagonalState(ladder, [0.2, 0.2, 0.2, 0.2, 0.2])
        assert classify_weight_transfer(window, general) == "general"

    def test_coherent_is_general(self, ladder):
        rho = np.diag([0.5, 0.5, 0, 0, 0]).astype(complex)
        rho[0, 1] = rho[1, 0] = 0.3
        assert classify_weight_transfer(rho, rho) == "general"


class TestCheckTransfer:
    @pytest.mark.parametrize("w,allowed", [(0.0, True), (0.3, True), (W_GROUND, True), (0.32, False), (1.0, False)])
    def test_case_a(self, qubit, beta1, w, allowed):
        weight = Spectrum(0.01, [(n, 1) for n in range(101)])
        n = round(w / 0.01)
        target = DiagonalState.pure(weight, (n, 1))
        v = check_transfer(DiagonalState.pure(qubit, (0, 1)), thermal_state(qubit, beta1), qubit,
                           DiagonalState.pure(weight, (0, 1)), target, weight, beta1)
        assert v.allowed is (n * 0.01 <= W_GROUND + 1e-9)
        assert v.bound == pytest.approx(W_GROUND, rel=1e-14)
        assert v.case_tag == "single-level"

    def test_shift_without_resource(self, qubit, ladder, beta1):
        rho = DiagonalState(qubit, [0.6, 0.4])
        v = check_transfer(rho, rho, qubit, level(ladder, 0), level(ladder, 1), ladder, beta1)
        assert not v.allowed
        assert v.margin < 0
        assert v.label == "ruled out"

    def test_identity(self, qubit, ladder, beta1):
        rho = DiagonalState(qubit, [0.6, 0.4])
        sw = DiagonalState(ladder, [0.5, 0.5, 0, 0, 0])
        v = check_transfer(rho, rho, qubit, sw, sw, ladder, beta1)
        assert v.allowed and v.margin == 0.0
        assert v.label == "not ruled out"

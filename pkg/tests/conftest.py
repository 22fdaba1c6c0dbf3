import math
import random
from fractions import Fraction

import pytest

from singleshot import CompositeModel, ConcreteBath, DiagonalState, IdealBath, Spectrum, ThermalContext, WeightModel

LN2 = math.log(2)


@pytest.fixture
def qubit():
    return Spectrum(1.0, [(0, 1), (1, 1)])


@pytest.fixture
def degenerate_pair():
    return Spectrum(1.0, [(0, 2)])


@pytest.fixture
def beta1():
    return ThermalContext(1.0)


def concrete_model(state, base=2, bath_top=6, weight_levels=1, spacing=1, truncation=None, shell_cap=4096):
    ctx = ThermalContext(math.log(base) / state.spectrum.quantum)
    bath = ConcreteBath.exponential(state.spectrum.quantum, base, bath_top)
    return CompositeModel(state, bath, WeightModel(spacing, weight_levels), ctx, truncation, shell_cap)


def ideal_model(state, beta=1.0, weight_levels=1, spacing=1):
    return CompositeModel(state, IdealBath(1.0), WeightModel(spacing, weight_levels), ThermalContext(beta))


def random_concrete_model(rng: random.Random, max_dim=4, max_shell=2048):
    """A small exact model: k in {2, 3}, system dim <= max_dim, a few weight levels.

    Draws are repeated until the largest shell stays below ``max_shell`` states.
    """
    while True:
        model = _draw_model(rng, max_dim)
        top = model.bath.max_quanta
        if model.system.dimension * (model.weight.max_level + 1) * model.base**top <= max_shell:
            return model


def _draw_model(rng, max_dim):
    k = rng.choice([2, 3])
    while True:
        energies = sorted(rng.sample(range(4), rng.randint(1, 3)))
        levels = [(e, rng.randint(1, 2)) for e in energies]
        if sum(m for _, m in levels) <= max_dim:
            break
    spec = Spectrum(1.0, levels)
    weights = [Fraction(rng.randint(0, 6)) for _ in range(spec.dimension)]
    if not any(weights):
        weights[rng.randrange(len(weights))] = Fraction(1)
    total = sum(weights)
    state = DiagonalState(spec, [w / total for w in weights])
    wm = WeightModel(rng.randint(1, 2), rng.randint(1, 3))
    top = spec.max_quanta + wm.top_quanta + rng.randint(0, 3)
    return concrete_model(state, base=k, bath_top=top, weight_levels=wm.max_level, spacing=wm.spacing_quanta)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

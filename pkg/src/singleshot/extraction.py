"""Maximal single-shot work from sorted eigenvalue blocks.

The cut over a ``BlockTable`` decides, per system label, which fraction ``h``
of its eigenvalue block must be kept so that at least ``(1 - eps)`` of the
shell population survives. From the kept dimension follow the generalised free
energy ``F_min_eps``, the work bound ``w_max_eps = F_min_eps - F(tau_S)`` and,
on an explicit bath, the largest lift achievable on the weight grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .core import DiagonalState, Key, ThermalContext, thermal_state
from .errors import ContractError
from .shells import (
    BlockTable,
    CompositeModel,
    admissible_shells,
    analytic_blocks,
    final_dimension,
    initial_blocks,
    initial_dimension,
)

GRID_TOL = 1e-12

HMap = dict[Key, Union[Fraction, float]]


@dataclass(frozen=True)
class CutResult:
    """Outcome of the greedy cut over one block table.

    ``d_ini`` is an exact integer in concrete mode and a real number relative
    to ``M_B(E)`` in ideal mode.
    """

    d_ini: Union[int, float]
    h_map: HMap
    included_mass: Union[Fraction, float]
    total_mass: Union[Fraction, float]
    epsilon: float

    @property
    def realized_failure(self) -> float:
        return float(1 - self.included_mass / self.total_mass)


def _check_epsilon(epsilon):
    if not (0 <= epsilon < 1):
        raise ContractError(f"epsilon must lie in [0, 1), got {epsilon!r}")


def epsilon_cut(blocks: BlockTable, epsilon: float) -> CutResult:
    """Keep the largest eigenvalues until ``(1 - epsilon)`` of the mass is covered.

    Concrete tables are cut exactly: a partially needed block contributes the
    smallest integer number of its eigenvalues that reaches the target, so the
    excluded mass never exceeds ``epsilon``. Ideal tables keep the exact real
    fraction of the cut block.
    """
    _check_epsilon(epsilon)
    h: HMap = {}
    if blocks.mode == "concrete":
        total = blocks.total_mass
        need = (1 - Fraction(epsilon)) * total
        d = 0
        kept = Fraction(0)
        for b in blocks:
            if need <= 0:
                h[b.level] = Fraction(0)
            elif b.mass <= need:
                h[b.level] = Fraction(1)
                d += b.count
                kept += b.mass
                need -= b.mass
            else:
                n = math.ceil(need / b.value)
                h[b.level] = Fraction(n, b.count)
                d += n
                kept += n * b.value
                need = Fraction(0)
        return CutResult(d, h, kept, total, epsilon)

    masses = [b.mass for b in blocks]
    total = math.fsum(masses)
    if epsilon == 0:
        for b in blocks:
            h[b.level] = 1.0
        return CutResult(math.fsum(b.count for b in blocks), h, total, total, epsilon)
    target = (1 - epsilon) * total
    d = 0.0
    before = 0.0
    for i, b in enumerate(blocks):
        if before >= target:
            frac = 0.0
        else:
            after = math.fsum(masses[: i + 1])
            frac = 1.0 if after <= target else (target - before) / b.mass
        h[b.level] = frac
        d += frac * b.count
        before = math.fsum(masses[: i + 1])
    kept = math.fsum(h[b.level] * b.mass for b in blocks)
    return CutResult(d, h, kept, total, epsilon)


def full_h_map(state: DiagonalState, cut: CutResult) -> HMap:
    """Extend a cut's h-map to every label of the system (unpopulated labels get 0)."""
    return {k: cut.h_map.get(k, 0) for k in state.keys()}


def _log_h_sum(state: DiagonalState, ctx: ThermalContext, h: HMap) -> float:
    """``ln sum_{E,g} exp(-beta E) h(E, g)``."""
    energies = state.spectrum.key_energies()
    weights = np.array([float(h.get(k, 0)) for k in state.keys()])
    mask = weights > 0
    return float(logsumexp(-ctx.beta * energies[mask], b=weights[mask]))


def _log_thermal_sum(state: DiagonalState, ctx: ThermalContext) -> float:
    # same per-label arrays as _log_h_sum with h == 1, so h == 1 reproduces it bit for bit
    energies = state.spectrum.key_energies()
    return float(logsumexp(-ctx.beta * energies, b=np.ones_like(energies)))


def analytic_cut(state: DiagonalState, ctx: ThermalContext, epsilon: float) -> CutResult:
    """The shell-independent (ideal-bath) cut of a system state."""
    return epsilon_cut(analytic_blocks(state, ctx), epsilon)


def f_min_epsilon(state: DiagonalState, ctx: ThermalContext, epsilon: float) -> float:
    """Generalised free energy ``-(1/beta) ln sum exp(-beta E_S) h(E_S, g_S, eps)``."""
    cut = analytic_cut(state, ctx, epsilon)
    return -_log_h_sum(state, ctx, cut.h_map) / ctx.beta


@dataclass
class ShellWork:
    """Per-shell dimensions on an explicit bath."""

    energy: int
    d_ini_0: int
    d_ini_epsilon: int
    d_fin: dict[int, int]
    h_map: HMap
    realized_failure: float
    w_max: float


@dataclass
class WorkReport:
    epsilon: float
    w_max: float
    w_max_t_form: float
    f_min: float
    f_thermal: float
    h_map: HMap
    d_ini_epsilon: float
    d_fin: float
    grid_level: int
    grid_quanta: int
    grid_achievable_w: float
    mode: str
    realized_failure: float
    shells: list[ShellWork] = field(default_factory=list)
    w_max_shells: float | None = None


def _t_form(state: DiagonalState, ctx: ThermalContext, h: HMap) -> float:
    t = thermal_state(state.spectrum, ctx).probabilities()
    hv = np.array([float(h.get(k, 0)) for k in state.keys()])
    return -math.log(math.fsum(t * hv)) / ctx.beta


def max_work(model: CompositeModel, epsilon: float) -> WorkReport:
    """Maximal single-level lift with failure probability at most ``epsilon``.

    ``w_max`` is the continuum bound ``F_min_eps - F(tau_S)`` (ideal-bath cut).
    On an explicit bath the report also lists every admissible shell with its
    exact ``d_ini(eps)`` and the final dimensions per weight level, and
    ``grid_achievable_w`` is the largest weight level for which
    ``d_fin >= d_ini(eps)`` holds in all of them. On the ideal bath the grid
    value is the largest weight level not above ``w_max``.
    """
    state, ctx = model.state, model.ctx
    beta = ctx.beta
    cut = analytic_cut(state, ctx, epsilon)
    log_h = _log_h_sum(state, ctx, cut.h_map)
    log_z = _log_thermal_sum(state, ctx)
    f_min = -log_h / beta
    f_thermal = -log_z / beta
    w_max = f_min - f_thermal
    w_t = _t_form(state, ctx, cut.h_map)
    if abs(w_max - w_t) > 1e-9 * max(1.0, abs(w_max)):
        raise ArithmeticError(f"work identity broken: {w_max!r} vs t-form {w_t!r}")

    spacing = model.weight.spacing_quanta
    step = spacing * model.quantum
    h_full = full_h_map(state, cut)
    if not model.is_concrete:
        level = min(model.weight.max_level, int(math.floor(w_max / step + GRID_TOL)))
        level = max(level, 0)
        d_ini = cut.d_ini
        return WorkReport(
            epsilon=epsilon, w_max=w_max, w_max_t_form=w_t, f_min=f_min, f_thermal=f_thermal,
            h_map=h_full, d_ini_epsilon=d_ini, d_fin=math.exp(log_z - beta * w_max),
            grid_level=level, grid_quanta=level * spacing, grid_achievable_w=level * step,
            mode="ideal", realized_failure=cut.realized_failure,
        )

    shells = concrete_shell_work(model, epsilon)
    feasible = [
        j for j, e_w in enumerate(model.weight.level_quanta())
        if all(s.d_fin[e_w] >= s.d_ini_epsilon for s in shells)
    ]
    level = max(feasible)
    rep = shells[0]
    return WorkReport(
        epsilon=epsilon, w_max=w_max, w_max_t_form=w_t, f_min=f_min, f_thermal=f_thermal,
        h_map=h_full, d_ini_epsilon=rep.d_ini_epsilon, d_fin=rep.d_fin[level * spacing],
        grid_level=level, grid_quanta=level * spacing, grid_achievable_w=level * step,
        mode="concrete",
        realized_failure=max(s.realized_failure for s in shells),
        shells=shells, w_max_shells=min(s.w_max for s in shells),
    )


def concrete_shell_work(model: CompositeModel, epsilon: float) -> list[ShellWork]:
    """Exact per-shell cut and final dimensions over the admissible shells."""
    _check_epsilon(epsilon)
    out = []
    bath = model.bath
    for e in admissible_shells(model):
        table = initial_blocks(model, e)
        cut = epsilon_cut(table, epsilon)
        d_fin = {w: final_dimension(model, e, (w, w)) for w in model.weight.level_quanta()}
        # d_fin(w) = M_B(E) Z_S k^-w on this window, so the per-shell bound is exact
        ratio = Fraction(cut.d_ini, bath.multiplicity(e))
        log_zs = math.log(sum(Fraction(m, model.base**e_s) for e_s, m in model.system.levels))
        w_shell = (log_zs - math.log(ratio)) / model.ctx.beta
        out.append(ShellWork(
            energy=e, d_ini_0=initial_dimension(model, e), d_ini_epsilon=cut.d_ini,
            d_fin=d_fin, h_map=full_h_map(model.state, cut),
            realized_failure=cut.realized_failure, w_max=w_shell,
        ))
    return out


def perfect_work(state: DiagonalState, ctx: ThermalContext) -> float:
    """``-(1/beta) ln tr[tau_S Pi_rho]`` with ``Pi_rho`` the support projector."""
    h = {k: 1.0 for k in state.support()}
    return (_log_thermal_sum(state, ctx) - _log_h_sum(state, ctx, h)) / ctx.beta


def _check_window(delta: float, spacing: float):
    if not spacing > 0:
        raise ContractError(f"level spacing must be positive, got {spacing!r}")
    if delta < 0:
        raise ContractError(f"window width must be nonnegative, got {delta!r}")
    n = delta / spacing
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ContractError(f"window width {delta!r} is not a multiple of spacing {spacing!r}")
    return int(round(n))


def multilevel_surplus(ctx: ThermalContext, delta: float, spacing: float) -> float:
    """Extra work from accepting any weight level in ``[w, w + delta]``.

    ``(1/beta) ln[(1 - exp(-beta (delta + dE))) / (1 - exp(-beta dE))]``.
    """
    _check_window(delta, spacing)
    b = ctx.beta
    return (math.log(-math.expm1(-b * (delta + spacing))) - math.log(-math.expm1(-b * spacing))) / b


def multilevel_surplus_direct(ctx: ThermalContext, delta: float, spacing: float, max_terms=10**7) -> float:
    """Same quantity from the explicit sum ``sum_{n=0}^{delta/dE} exp(-beta dE n)``."""
    n = _check_window(delta, spacing)
    if n + 1 > max_terms:
        raise ContractError(f"window holds {n + 1} levels; direct sum capped at {max_terms}")
    terms = np.exp(-ctx.beta * spacing * np.arange(n + 1))
    return math.log(math.fsum(terms)) / ctx.beta


def surplus_asymptote(ctx: ThermalContext, spacing: float) -> float:
    """Large-window, fine-spacing limit ``-ln(beta dE) / beta``."""
    return -math.log(ctx.beta * spacing) / ctx.beta


def multilevel_max_work(model: CompositeModel, epsilon: float, delta: float) -> float:
    """``w_max_eps`` plus the surplus for a final weight window of width ``delta``."""
    spacing = model.weight.spacing_quanta * model.quantum
    return max_work(model, epsilon).w_max + multilevel_surplus(model.ctx, delta, spacing)

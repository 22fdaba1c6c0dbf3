"""Energy shells of system + bath + weight and the sorted eigenvalue blocks per shell.

Two bath descriptions are supported. ``IdealBath`` is the analytic
``M_B(E) = M0 exp(beta E)`` density of states and is never enumerated; all
quantities it feeds are ratios in which ``M_B(E)`` cancels. ``ConcreteBath`` is
an explicit integer-multiplicity ladder ``M_B(n) = M0 k**n`` with
``k = exp(beta * quantum)`` an integer, so every dimension is an exact integer
and every initial eigenvalue an exact rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

from .core import DiagonalState, Key, Spectrum, ThermalContext, log_partition_function
from .errors import ContractError, SizeCapError

DEFAULT_SHELL_CAP = 4096
BASE_TOL = 1e-9


@dataclass(frozen=True)
class IdealBath:
    """Analytic bath with ``M_B(E) = m0 * exp(beta * E)``."""

    m0: float = 1.0

    def __post_init__(self):
        if not (self.m0 > 0 and math.isfinite(self.m0)):
            raise ContractError(f"m0 must be positive, got {self.m0}")

    def log_multiplicity(self, energy: float, beta: float) -> float:
        return math.log(self.m0) + beta * energy


@dataclass(frozen=True)
class ConcreteBath:
    """Explicit bath ladder whose multiplicities grow as ``m0 * k**n``."""

    spectrum: Spectrum

    @classmethod
    def exponential(cls, quantum: float, base: int, max_level: int, m0: int = 1) -> "ConcreteBath":
        return cls(Spectrum(quantum, [(n, m0 * base**n) for n in range(max_level + 1)]))

    @property
    def m0(self) -> int:
        return self.spectrum.multiplicity(0)

    @property
    def max_quanta(self) -> int:
        return self.spectrum.max_quanta

    def multiplicity(self, quanta: int) -> int:
        return self.spectrum.multiplicity(quanta)

    def validate(self, ctx: ThermalContext) -> int:
        """Check exact exponential growth and return the integer base ``k``.

        Raises:
            ContractError: naming the violated invariant.
        """
        raw = math.exp(ctx.beta * self.spectrum.quantum)
        k = round(raw)
        if k < 2 or abs(raw - k) > BASE_TOL * k:
            raise ContractError(
                f"exp(beta * quantum) = {raw!r} is not an integer >= 2; "
                "concrete baths need beta = ln(k) / quantum"
            )
        expected = 0
        for n, m in self.spectrum.levels:
            if n != expected:
                raise ContractError(
                    f"bath levels must be contiguous from 0 quanta; missing level {expected}"
                )
            if m != self.m0 * k**n:
                raise ContractError(
                    f"bath multiplicity at {n} quanta is {m}, expected M0*k^n = {self.m0 * k**n}"
                )
            expected += 1
        return k

    def base(self, ctx: ThermalContext) -> int:
        return round(math.exp(ctx.beta * self.spectrum.quantum))

    def state_probability(self, quanta: int, ctx: ThermalContext) -> Fraction:
        """Exact thermal probability of one bath eigenstate at ``quanta``."""
        k = self.base(ctx)
        z_b = self.m0 * (self.max_quanta + 1)  # sum_n m0 k^n k^-n
        return Fraction(1, k**quanta * z_b)


BathModel = Union[IdealBath, ConcreteBath]


@dataclass(frozen=True)
class WeightModel:
    """Non-degenerate work-storage ladder ``0, s, 2s, ..., max_level * s`` in quanta."""

    spacing_quanta: int = 1
    max_level: int = 1

    def __post_init__(self):
        if self.spacing_quanta < 1:
            raise ContractError("weight spacing must be a positive number of quanta")
        if self.max_level < 0:
            raise ContractError("weight max_level must be nonnegative")

    @property
    def top_quanta(self) -> int:
        return self.spacing_quanta * self.max_level

    def level_quanta(self) -> list[int]:
        return [j * self.spacing_quanta for j in range(self.max_level + 1)]

    def spectrum(self, quantum: float) -> Spectrum:
        return Spectrum(quantum, [(e, 1) for e in self.level_quanta()])

    def level_of(self, quanta: int) -> int:
        if quanta % self.spacing_quanta or not 0 <= quanta <= self.top_quanta:
            raise ContractError(f"{quanta} quanta is not on the weight grid")
        return quanta // self.spacing_quanta


@dataclass(frozen=True)
class CompositeModel:
    """System state, bath, weight and temperature: everything that defines the shells.

    ``truncation`` caps the total energy (in quanta) of enumerated shells;
    ``shell_cap`` caps the dimension of any single shell.
    """

    state: DiagonalState
    bath: BathModel
    weight: WeightModel
    ctx: ThermalContext
    truncation: int | None = None
    shell_cap: int = DEFAULT_SHELL_CAP
    base: int | None = field(init=False, default=None, compare=False)

    def __post_init__(self):
        if isinstance(self.bath, ConcreteBath):
            if self.bath.spectrum.quantum != self.system.quantum:
                raise ContractError("bath and system must share the energy quantum")
            object.__setattr__(self, "base", self.bath.validate(self.ctx))

    @property
    def system(self) -> Spectrum:
        return self.state.spectrum

    @property
    def quantum(self) -> float:
        return self.system.quantum

    @property
    def is_concrete(self) -> bool:
        return isinstance(self.bath, ConcreteBath)

    def with_state(self, state: DiagonalState) -> "CompositeModel":
        return CompositeModel(state, self.bath, self.weight, self.ctx, self.truncation, self.shell_cap)

    def with_weight(self, weight: WeightModel) -> "CompositeModel":
        return CompositeModel(self.state, self.bath, weight, self.ctx, self.truncation, self.shell_cap)

    def require_concrete(self) -> ConcreteBath:
        if not self.is_concrete:
            raise ContractError("this operation needs a concrete (enumerable) bath")
        return self.bath


# ---------------------------------------------------------------------------
# Explicit shell bases (concrete mode)


@dataclass(frozen=True)
class SubBlock:
    """Product states of one shell sharing (E_S, E_B, E_W).

    States inside are ordered ``(g, f)`` row-major: index ``(g-1) * bath_mult + (f-1)``.
    """

    system_quanta: int
    bath_quanta: int
    weight_quanta: int
    system_mult: int
    bath_mult: int
    offset: int

    @property
    def size(self) -> int:
        return self.system_mult * self.bath_mult

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class ShellBasis:
    """Ordered product basis of one total-energy shell, grouped by (E_W, E_S)."""

    energy: int
    subblocks: tuple[SubBlock, ...]

    @property
    def dimension(self) -> int:
        return self.subblocks[-1].stop if self.subblocks else 0

    def at_weight(self, weight_quanta: int) -> list[SubBlock]:
        return [b for b in self.subblocks if b.weight_quanta == weight_quanta]

    def labels(self) -> Iterator[tuple[Key, int, int, int]]:
        """Yield ``((E_S, g), E_B, f, E_W)`` for every basis state in order."""
        for b in self.subblocks:
            for g in range(1, b.system_mult + 1):
                for f in range(1, b.bath_mult + 1):
                    yield (b.system_quanta, g), b.bath_quanta, f, b.weight_quanta


@dataclass(frozen=True)
class ShellDescriptor:
    energy: int
    dimension: int
    population: Fraction


def shell_basis(model: CompositeModel, energy: int, weight_levels=None) -> ShellBasis:
    """Product basis of shell ``energy``, restricted to the given weight levels (quanta)."""
    bath = model.require_concrete()
    if weight_levels is None:
        weight_levels = model.weight.level_quanta()
    blocks = []
    offset = 0
    for e_w in sorted(weight_levels):
        for e_s, m_s in model.system.levels:
            m_b = bath.multiplicity(energy - e_s - e_w)
            if m_b == 0:
                continue
            blocks.append(SubBlock(e_s, energy - e_s - e_w, e_w, m_s, m_b, offset))
            offset += m_s * m_b
    if offset > model.shell_cap:
        raise SizeCapError(f"shell E={energy} has dimension {offset} > cap {model.shell_cap}")
    return ShellBasis(energy, tuple(blocks))


def shell_energies(model: CompositeModel) -> range:
    """All total energies present in the (truncated) product space."""
    bath = model.require_concrete()
    top = model.system.max_quanta + bath.max_quanta + model.weight.top_quanta
    if model.truncation is not None:
        top = min(top, model.truncation)
    return range(0, top + 1)


def shell_population(model: CompositeModel, energy: int, weight_quanta: int = 0) -> Fraction:
    """Exact probability of the initial state ``rho_S x tau_B x |w><w|`` in shell ``energy``."""
    bath = model.require_concrete()
    total = Fraction(0)
    for (e_s, _), lam in zip(model.system.keys(), model.state.exact()):
        e_b = energy - e_s - weight_quanta
        m_b = bath.multiplicity(e_b)
        if lam and m_b:
            total += lam * m_b * bath.state_probability(e_b, model.ctx)
    return total


def enumerate_shells(model: CompositeModel) -> list[ShellDescriptor]:
    """Partition the full product space into total-energy shells.

    Every product state appears in exactly one shell. ``population`` is the mass
    of the initial state (weight in its ground level) in that shell.

    Raises:
        SizeCapError: if a shell exceeds ``model.shell_cap``.
    """
    out = []
    for e in shell_energies(model):
        basis = shell_basis(model, e)
        if basis.dimension:
            out.append(ShellDescriptor(e, basis.dimension, shell_population(model, e)))
    return out


def admissible_shells(model: CompositeModel) -> range:
    """Shells in which every bath energy the extraction map touches obeys exact growth.

    A shell ``E`` qualifies when ``E - E_S - E_W >= 0`` for every system level and
    every weight level, and ``E - E_S <= max bath level`` for every system level.
    Inside this window ``M_B(E - E_S - w) = M_B(E) k**-(E_S + w)`` holds exactly.
    """
    bath = model.require_concrete()
    lo = model.system.max_quanta + model.weight.top_quanta
    hi = bath.max_quanta
    if model.truncation is not None:
        hi = min(hi, model.truncation)
    if lo > hi:
        raise ContractError(
            f"bath ladder (top {bath.max_quanta} quanta) too short for system top "
            f"{model.system.max_quanta} plus weight top {model.weight.top_quanta}"
        )
    return range(lo, hi + 1)


def truncation_tail(model: CompositeModel) -> float:
    """Initial-state probability lying outside the admissible shells."""
    inside = sum((shell_population(model, e) for e in admissible_shells(model)), Fraction(0))
    return float(1 - inside)


# ---------------------------------------------------------------------------
# Dimensions


def final_dimension(model: CompositeModel, shell_energy: int, weight_window) -> Union[int, float]:
    """Dimension of the final subspace with the weight anywhere in ``weight_window``.

    ``weight_window`` is a pair ``(w_lo, w_hi)`` of weight energies in quanta,
    both on the weight grid. Concrete baths give an exact integer count; the
    ideal bath gives ``M_B(E) Z_S sum_{E_W} exp(-beta E_W)`` as a real number.
    """
    w_lo, w_hi = (int(x) for x in weight_window)
    if w_lo > w_hi:
        raise ContractError("weight window must satisfy w_lo <= w_hi")
    spacing = model.weight.spacing_quanta
    if w_lo % spacing or w_hi % spacing or w_lo < 0:
        raise ContractError(f"window ({w_lo}, {w_hi}) is off the weight grid (spacing {spacing})")
    levels = range(w_lo, w_hi + 1, spacing)
    if model.is_concrete:
        bath = model.bath
        return sum(
            m_s * bath.multiplicity(shell_energy - e_s - e_w)
            for e_w in levels
            for e_s, m_s in model.system.levels
        )
    beta, q = model.ctx.beta, model.quantum
    log_m = model.bath.log_multiplicity(shell_energy * q, beta)
    log_z = log_partition_function(model.system, model.ctx)
    log_window = math.log(geometric_window_sum(beta, w_lo * q, (w_hi - w_lo) * q, spacing * q))
    return math.exp(log_m + log_z + log_window)


def geometric_window_sum(beta: float, w: float, delta: float, spacing: float) -> float:
    """Closed form of ``sum_{n} exp(-beta E_W)`` for ``E_W`` in ``[w, w + delta]`` on the grid."""
    if spacing <= 0:
        raise ContractError("weight spacing must be positive")
    return math.exp(-beta * w) * math.expm1(-beta * (delta + spacing)) / math.expm1(-beta * spacing)


def initial_dimension(model: CompositeModel, shell_energy: int) -> int:
    """Exact ``d_ini(0)``: states of shell ``shell_energy`` with the weight at ground."""
    bath = model.require_concrete()
    return sum(m_s * bath.multiplicity(shell_energy - e_s) for e_s, m_s in model.system.levels)


# ---------------------------------------------------------------------------
# Eigenvalue blocks


@dataclass(frozen=True)
class Block:
    """Equal eigenvalues of the initial state that share one system label."""

    level: Key
    value: Union[Fraction, float]
    count: Union[int, float]
    mass: Union[Fraction, float]


@dataclass(frozen=True)
class BlockTable:
    """Initial-state eigenvalue blocks of one shell, sorted by value descending.

    In ``"concrete"`` mode values and masses are exact rationals and counts are
    integer bath multiplicities ``M_B(E - E_S)``. In ``"ideal"`` mode all three
    are reals relative to ``M_B(E)``: ``value = lambda exp(beta E_S)``,
    ``count = exp(-beta E_S)`` and ``mass = lambda``; the table does not depend
    on the shell.
    """

    shell_energy: int
    blocks: tuple[Block, ...]
    mode: str

    @property
    def total_mass(self):
        if self.mode == "concrete":
            return sum((b.mass for b in self.blocks), Fraction(0))
        return math.fsum(b.mass for b in self.blocks)

    @property
    def total_count(self):
        return sum(b.count for b in self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)


def _sort_blocks(blocks: list[Block]) -> tuple[Block, ...]:
    # descending value; equal values fall back to ascending (E_S, g)
    return tuple(sorted(blocks, key=lambda b: (-b.value, b.level)))


def analytic_blocks(state: DiagonalState, ctx: ThermalContext, shell_energy: int = 0) -> BlockTable:
    """Ideal-bath block table of a system state (independent of the shell)."""
    q = state.spectrum.quantum
    blocks = []
    for key, lam in zip(state.keys(), state.probabilities()):
        if lam == 0:
            continue
        e_s = key[0] * q
        blocks.append(Block(key, float(lam * math.exp(ctx.beta * e_s)), math.exp(-ctx.beta * e_s), float(lam)))
    return BlockTable(shell_energy, _sort_blocks(blocks), "ideal")


def initial_blocks(model: CompositeModel, shell_energy: int = 0) -> BlockTable:
    """Sorted eigenvalue blocks of ``rho_S x tau_B x |0><0|`` in one shell.

    Only populated system labels contribute. In ideal mode ``shell_energy`` is
    irrelevant.
    """
    if not model.is_concrete:
        return analytic_blocks(model.state, model.ctx, shell_energy)
    bath = model.bath
    blocks = []
    for key, lam in zip(model.system.keys(), model.state.exact()):
        e_b = shell_energy - key[0]
        count = bath.multiplicity(e_b)
        if lam == 0 or count == 0:
            continue
        value = lam * bath.state_probability(e_b, model.ctx)
        blocks.append(Block(key, value, count, value * count))
    return BlockTable(shell_energy, _sort_blocks(blocks), "concrete")

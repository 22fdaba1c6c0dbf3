"""Spectra, diagonal states and scalar thermodynamics.

Energies live on an integer grid: a level is stored as ``energy_quanta`` and its
physical energy is ``energy_quanta * quantum``. Entropies are in nats with
k_B = 1, so ``F = U - S / beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError

NORMALIZATION_TOL = 1e-12

Key = tuple[int, int]  # (energy_quanta, degeneracy index g starting at 1)


@dataclass(frozen=True)
class ThermalContext:
    """Inverse temperature of the bath, in inverse energy units."""

    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ContractError(f"beta must be positive and finite, got {self.beta!r}")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta


@dataclass(frozen=True)
class Spectrum:
    """A discrete energy ladder on a grid with spacing ``quantum``.

    Args:
        quantum: Energy of one grid step.
        levels: ``(energy_quanta, multiplicity)`` pairs, strictly increasing in energy.
    """

    quantum: float
    levels: tuple[tuple[int, int], ...]

    def __init__(self, quantum: float, levels: Iterable[Sequence[int]]):
        object.__setattr__(self, "quantum", float(quantum))
        object.__setattr__(self, "levels", tuple((int(e), int(m)) for e, m in levels))
        self._validate()

    def _validate(self):
        if not (math.isfinite(self.quantum) and self.quantum > 0):
            raise ContractError(f"quantum must be positive, got {self.quantum}")
        if not self.levels:
            raise ContractError("spectrum needs at least one level")
        prev = None
        for e, m in self.levels:
            if e < 0:
                raise ContractError(f"energy quanta must be nonnegative, got {e}")
            if m < 1:
                raise ContractError(f"multiplicity must be >= 1, got {m} at energy {e}")
            if prev is not None and e <= prev:
                raise ContractError("energies must be strictly increasing")
            prev = e

    @property
    def dimension(self) -> int:
        return sum(m for _, m in self.levels)

    @property
    def max_quanta(self) -> int:
        return self.levels[-1][0]

    def multiplicity(self, energy_quanta: int) -> int:
        """Multiplicity at ``energy_quanta``; zero when no level sits there."""
        return self._mult_lookup.get(energy_quanta, 0)

    @property
    def _mult_lookup(self) -> dict[int, int]:
        cache = self.__dict__.get("_lookup")
        if cache is None:
            cache = dict(self.levels)
            object.__setattr__(self, "_lookup", cache)
        return cache

    def keys(self) -> list[Key]:
        """All basis labels ``(E, g)`` in canonical order."""
        return [(e, g) for e, m in self.levels for g in range(1, m + 1)]

    def key_energies(self) -> np.ndarray:
        """Physical energy of every basis label, in ``keys()`` order."""
        return np.array([e * self.quantum for e, _ in self.keys()], dtype=float)

    def level_energies(self) -> np.ndarray:
        return np.array([e * self.quantum for e, _ in self.levels], dtype=float)

    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.levels], dtype=float)

    def shifted(self, quanta: int) -> "Spectrum":
        return Spectrum(self.quantum, [(e + quanta, m) for e, m in self.levels])


class DiagonalState:
    """Populations over the basis labels of one spectrum.

    Populations may be floats or exact ``Fraction`` values; exact inputs keep
    integer-dimension computations free of rounding.
    """

    __slots__ = ("spectrum", "populations", "_index")

    def __init__(self, spectrum: Spectrum, populations: Sequence[Real]):
        keys = spectrum.keys()
        if len(populations) != len(keys):
            raise ContractError(
                f"expected {len(keys)} populations for this spectrum, got {len(populations)}"
            )
        pops = tuple(_as_number(p) for p in populations)
        for k, p in zip(keys, pops):
            if p < 0 or not math.isfinite(float(p)):
                raise ContractError(f"population of {k} must be nonnegative, got {p}")
        total = math.fsum(float(p) for p in pops)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ContractError(f"populations sum to {total!r}, not 1")
        self.spectrum = spectrum
        self.populations = pops
        self._index = {k: i for i, k in enumerate(keys)}

    @classmethod
    def from_mapping(cls, spectrum: Spectrum, mapping: Mapping[Key, Real]) -> "DiagonalState":
        keys = spectrum.keys()
        unknown = set(mapping) - set(keys)
        if unknown:
            raise ContractError(f"labels not in spectrum: {sorted(unknown)}")
        return cls(spectrum, [mapping.get(k, 0) for k in keys])

    @classmethod
    def pure(cls, spectrum: Spectrum, key: Key) -> "DiagonalState":
        return cls.from_mapping(spectrum, {tuple(key): 1})

    @classmethod
    def uniform(cls, spectrum: Spectrum) -> "DiagonalState":
        n = spectrum.dimension
        return cls(spectrum, [Fraction(1, n)] * n)

    def keys(self) -> list[Key]:
        return self.spectrum.keys()

    def as_dict(self) -> dict[Key, Real]:
        return dict(zip(self.keys(), self.populations))

    def probabilities(self) -> np.ndarray:
        return np.array([float(p) for p in self.populations], dtype=float)

    def exact(self) -> tuple[Fraction, ...]:
        """Populations as exact rationals (floats convert without rounding)."""
        return tuple(Fraction(p) for p in self.populations)

    def __getitem__(self, key: Key) -> Real:
        return self.populations[self._index[tuple(key)]]

    def support(self) -> list[Key]:
        return [k for k, p in zip(self.keys(), self.populations) if p > 0]

    def is_full_rank(self) -> bool:
        return all(p > 0 for p in self.populations)

    def __eq__(self, other):
        if not isinstance(other, DiagonalState):
            return NotImplemented
        return self.spectrum == other.spectrum and self.populations == other.populations

    def __repr__(self):
        body = ", ".join(f"{k}: {float(p):.6g}" for k, p in self.as_dict().items())
        return f"DiagonalState({{{body}}})"


def _as_number(p):
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p)
    if isinstance(p, (int, np.integer)):
        return Fraction(int(p))
    return float(p)


def log_partition_function(spectrum: Spectrum, ctx: ThermalContext) -> float:
    """``ln Z`` evaluated with log-sum-exp over levels."""
    return float(
        logsumexp(-ctx.beta * spectrum.level_energies(), b=spectrum.multiplicities())
    )


def partition_function(spectrum: Spectrum, ctx: ThermalContext) -> float:
    """``Z = sum_E M(E) exp(-beta E)``.

    Raises:
        OverflowError: if ``Z`` leaves the representable range.
    """
    log_z = log_partition_function(spectrum, ctx)
    z = math.exp(log_z) if log_z < 709.0 else math.inf
    if not (0.0 < z < math.inf):
        raise OverflowError(f"partition function out of range (ln Z = {log_z})")
    return z


def thermal_state(spectrum: Spectrum, ctx: ThermalContext) -> DiagonalState:
    """Gibbs populations ``exp(-beta E) / Z``, equal within each degenerate level."""
    log_z = log_partition_function(spectrum, ctx)
    p = np.exp(-ctx.beta * spectrum.key_energies() - log_z)
    p = p / math.fsum(p)
    return DiagonalState(spectrum, p.tolist())


def entropy(state: DiagonalState) -> float:
    """Shannon entropy of the populations in nats, with ``0 ln 0 = 0``."""
    p = state.probabilities()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def mean_energy(state: DiagonalState) -> float:
    return float(np.dot(state.probabilities(), state.spectrum.key_energies()))


def free_energy(state: DiagonalState, ctx: ThermalContext) -> float:
    """``F = U - S / beta``."""
    return mean_energy(state) - entropy(state) / ctx.beta


def thermal_free_energy(spectrum: Spectrum, ctx: ThermalContext) -> float:
    """``F(tau) = -ln(Z) / beta``."""
    return -log_partition_function(spectrum, ctx) / ctx.beta


def trace_distance_diag(a: DiagonalState, b: DiagonalState) -> float:
    """Half the l1 distance between two population vectors."""
    if a.spectrum != b.spectrum:
        raise ContractError("trace distance needs states on the same spectrum")
    return 0.5 * math.fsum(abs(x - y) for x, y in zip(a.probabilities(), b.probabilities()))

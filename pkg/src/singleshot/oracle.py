"""Independent brute-force checks of the extraction, formation and second-law results.

Nothing here reuses the block tables or cuts of ``extraction``: shells are
enumerated state by state, initial eigenvalues are listed individually as exact
rationals and every dimension condition is decided by counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import DiagonalState, Key, thermal_state, trace_distance_diag
from .density import matrix_free_energy, trace_distance
from .errors import ContractError, SizeCapError
from .shells import CompositeModel, ShellBasis, admissible_shells, shell_basis, shell_energies
from .typicality import as_generator, haar_unitary, sample_rng

TRACE_TOL = 1e-12
DENSE_CAP = 200_000
SATURATION_STAT = 1e-6
SATURATION_DISTANCE = 1e-3


# ---------------------------------------------------------------------------
# Transferability of one shell


@dataclass
class TransferabilityVerdict:
    feasible: bool
    d_ini: int
    d_fin: int
    retained_mass: Fraction
    permutation: dict[int, int] | None = None
    final_mass: float | None = None
    trace_error: float | None = None


def transferable(eigenvalues: Mapping[int, Fraction], final: Sequence[int], epsilon) -> TransferabilityVerdict:
    """Can the initial shell state be moved into ``final`` up to failure mass ``epsilon``?

    Args:
        eigenvalues: Initial eigenvalue of each initial basis index (exact rationals).
        final: Basis indices spanning the final subspace.
        epsilon: Allowed failure probability, relative to the shell mass.

    The smallest set of initial states carrying ``(1 - epsilon)`` of the mass is
    found by listing eigenvalues largest first. When it fits, the returned
    permutation sends those states into ``final`` and the trace condition is
    re-evaluated numerically on the permuted diagonal: ``trace_error`` is the
    shortfall of ``tr[Pi_fin eta']`` below ``(1 - epsilon)`` of the shell mass.
    """
    if not 0 <= epsilon < 1:
        raise ContractError(f"epsilon must lie in [0, 1), got {epsilon!r}")
    values = {int(i): Fraction(v) for i, v in eigenvalues.items()}
    total = sum(values.values(), Fraction(0))
    need = (1 - Fraction(epsilon)) * total
    order = sorted((i for i in values if values[i] > 0), key=lambda i: (-values[i], i))
    kept, mass = [], Fraction(0)
    for i in order:
        if mass >= need:
            break
        kept.append(i)
        mass += values[i]
    final = [int(f) for f in final]
    verdict = TransferabilityVerdict(len(kept) <= len(final), len(kept), len(final), mass)
    if not verdict.feasible:
        return verdict

    perm = dict(zip(kept, final))
    # complete to a bijection of the whole index set so the map is a genuine permutation
    universe = sorted(set(values) | set(final))
    sources = [i for i in universe if i not in perm]
    targets = [j for j in universe if j not in set(perm.values())]
    perm.update(zip(sources, targets))
    eta = np.zeros(max(universe) + 1)
    for i, v in values.items():
        eta[perm[i]] += float(v)
    in_final = math.fsum(eta[final])
    verdict.permutation = perm
    verdict.final_mass = in_final
    verdict.trace_error = max(0.0, float(need) - in_final)
    if verdict.trace_error > TRACE_TOL:
        raise ArithmeticError(f"permutation leaves {in_final!r} in the final subspace, needed {float(need)!r}")
    return verdict


def shell_eigenvalues(model: CompositeModel, basis: ShellBasis) -> dict[int, Fraction]:
    """Initial eigenvalue (weight at ground) of every weight-0 state of ``basis``, state by state."""
    bath = model.require_concrete()
    pops = dict(zip(model.system.keys(), model.state.exact()))
    out = {}
    for i, (key, e_b, _, e_w) in enumerate(basis.labels()):
        if e_w == 0:
            out[i] = pops[key] * bath.state_probability(e_b, model.ctx)
    return out


# ---------------------------------------------------------------------------
# Work extraction by enumeration


@dataclass
class BruteForceWork:
    level: int
    quanta: int
    w: float
    verdicts: dict[int, TransferabilityVerdict] = field(default_factory=dict)


def brute_force_max_work(model: CompositeModel, epsilon) -> BruteForceWork:
    """Largest weight-grid lift for which every admissible shell is transferable.

    Levels are tried from the top of the weight ladder down; level 0 always works.
    """
    model.require_concrete()
    spacing = model.weight.spacing_quanta
    shells = list(admissible_shells(model))
    for level in range(model.weight.max_level, -1, -1):
        w_q = level * spacing
        verdicts = {}
        for e in shells:
            basis = shell_basis(model, e, sorted({0, w_q}))
            eig = shell_eigenvalues(model, basis)
            final = [i for i, lab in enumerate(basis.labels()) if lab[3] == w_q]
            verdicts[e] = transferable(eig, final, epsilon)
            if not verdicts[e].feasible:
                break
        else:
            return BruteForceWork(level, w_q, w_q * model.quantum, verdicts)
    raise ArithmeticError("level 0 must always be transferable")  # unreachable for consistent data


# ---------------------------------------------------------------------------
# Formation by enumeration


WITNESS = "witness"
NO_WITNESS = "bound-feasible, witness-not-constructed"


@dataclass
class BruteForceFormation:
    level: int | None
    quanta: int | None
    w: float | None
    status: str
    analytic_w: float
    bounds: dict[Key, Fraction] = field(default_factory=dict)
    assignment: dict[int, dict[Key, int]] | None = None


def _formation_level(model: CompositeModel, target: Sequence[Fraction], w_q: int, cap: int):
    """Level-wise bound and, if possible, an integer permutation witness at weight ``w_q``."""
    bath = model.bath
    k = model.base
    keys = model.system.keys()
    z_s = sum((Fraction(m, k**e) for e, m in model.system.levels), Fraction(0))
    z_b = bath.m0 * (bath.max_quanta + 1)
    shells = []
    for e in admissible_shells(model):
        # the thermal initial state is flat inside a shell: one eigenvalue r on d states
        d = 0
        for e_s, m_s in model.system.levels:
            d += m_s * bath.multiplicity(e - w_q - e_s)
        if d + sum(m_s * bath.multiplicity(e - e_s) for e_s, m_s in model.system.levels) > cap:
            raise SizeCapError(f"shell E={e} exceeds the formation oracle cap {cap}")
        r = Fraction(1, k ** (e - w_q)) / (z_s * z_b)
        shells.append((e, r, d))
    p_adm = sum((r * d for _, r, d in shells), Fraction(0))
    bounds = {
        key: sum((r * bath.multiplicity(e - key[0]) for e, r, _ in shells), Fraction(0)) / p_adm
        for key in keys
    }
    if any(s > bounds[key] for key, s in zip(keys, target)):
        return False, bounds, None
    assignment = {}
    for e, r, d in shells:
        row = {}
        for key, s in zip(keys, target):
            n = s * d
            if n.denominator != 1 or n > bath.multiplicity(e - key[0]):
                return True, bounds, None
            row[key] = int(n)
        assignment[e] = row
    # the witness reproduces the target exactly
    for key, s in zip(keys, target):
        got = sum((r * assignment[e][key] for e, r, _ in shells), Fraction(0)) / p_adm
        if got != s:
            raise ArithmeticError(f"witness gives {got} at {key}, target {s}")
    return True, bounds, assignment


def brute_force_formation(model: CompositeModel, target: DiagonalState, system_cap: int = 4,
                          shell_cap: int = 256) -> BruteForceFormation:
    """Smallest weight-grid level from which ``target`` can be formed out of ``tau_S``.

    The weight starts at level ``w`` and ends at ground; the bath starts thermal.
    At each level the oracle checks the bound that no final label can hold more
    than the largest initial eigenvalue times its number of states, summed over
    shells, and then tries to build an explicit permutation: in every shell,
    ``s(E_S, g) * d_ini`` initial states are sent to label ``(E_S, g)``.

    Raises:
        SizeCapError: if the system or a shell is larger than the caps.
    """
    model.require_concrete()
    if target.spectrum != model.system:
        raise ContractError("target must live on the model's system spectrum")
    if model.system.dimension > system_cap:
        raise SizeCapError(f"system dimension {model.system.dimension} exceeds {system_cap}")
    s = target.exact()
    t = thermal_state(model.system, model.ctx).probabilities()
    mu = float(np.max(target.probabilities() / t))
    analytic = math.log(mu) / model.ctx.beta
    spacing = model.weight.spacing_quanta
    last_bounds = {}
    for level in range(model.weight.max_level + 1):
        w_q = level * spacing
        ok, bounds, assignment = _formation_level(model, s, w_q, shell_cap)
        last_bounds = bounds
        if ok:
            return BruteForceFormation(
                level, w_q, w_q * model.quantum, WITNESS if assignment else NO_WITNESS,
                analytic, bounds, assignment,
            )
    return BruteForceFormation(None, None, None, "infeasible on the weight ladder", analytic, last_bounds)


# ---------------------------------------------------------------------------
# Energy-conserving unitaries and the second law


@dataclass
class BlockUnitary:
    """A unitary that acts independently inside every total-energy shell."""

    model: CompositeModel
    bases: list[ShellBasis]
    blocks: list[np.ndarray]

    def product_indices(self, basis: ShellBasis) -> np.ndarray:
        """Positions of the shell's basis states in the ``S x B x W`` product basis."""
        sys_index = {k: i for i, k in enumerate(self.model.system.keys())}
        bath_index = {k: i for i, k in enumerate(self.model.bath.spectrum.keys())}
        levels = self.model.weight.level_quanta()
        d_b, d_w = len(bath_index), len(levels)
        return np.array([
            (sys_index[key] * d_b + bath_index[(e_b, f)]) * d_w + levels.index(e_w)
            for key, e_b, f, e_w in basis.labels()
        ], dtype=int)

    @property
    def dimension(self) -> int:
        return sum(b.dimension for b in self.bases)

    def total_energy(self) -> np.ndarray:
        """Diagonal of ``H_S + H_B + H_W`` (in quanta) over the product basis."""
        out = np.zeros(self.dimension)
        for basis in self.bases:
            out[self.product_indices(basis)] = basis.energy
        return out

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        n = self.dimension
        if n * n > cap:
            raise SizeCapError(f"dense unitary would hold {n * n} entries > cap {cap}")
        u = np.zeros((n, n), dtype=complex)
        for basis, block in zip(self.bases, self.blocks):
            idx = self.product_indices(basis)
            u[np.ix_(idx, idx)] = block
        return u

    def commutator_norm(self, cap: int = DENSE_CAP) -> float:
        u = self.to_dense(cap)
        h = self.total_energy()
        return float(np.max(np.abs(u * h[None, :] - h[:, None] * u)))

    def unitarity_error(self) -> float:
        return max(float(np.max(np.abs(b.conj().T @ b - np.eye(len(b))))) for b in self.blocks)


def all_shell_bases(model: CompositeModel) -> list[ShellBasis]:
    """Every nonempty shell of the full product space, all weight levels included."""
    out = []
    for e in shell_energies(model):
        basis = shell_basis(model, e)
        if basis.dimension:
            out.append(basis)
    return out


def random_energy_conserving_unitary(model: CompositeModel, seed) -> BlockUnitary:
    """Independent Haar unitary in each shell, drawn in increasing shell energy."""
    model.require_concrete()
    rng = as_generator(seed)
    bases = all_shell_bases(model)
    return BlockUnitary(model, bases, [haar_unitary(b.dimension, rng) for b in bases])


@dataclass
class Marginals:
    rho_s: np.ndarray
    rho_b: np.ndarray
    p_w: np.ndarray


def shell_marginals(model: CompositeModel, bases: list[ShellBasis], states: list[np.ndarray]) -> Marginals:
    """Reduced states of S, B and W from block-diagonal global states.

    States of one subblock share ``(E_S, E_B, E_W)``, and two basis states can
    only be coherent in a reduced state if they agree on the traced factors, so
    each reduced state is assembled from subblock diagonals alone; ``rho_W`` is
    diagonal.
    """
    sys_keys = model.system.keys()
    sys_index = {k: i for i, k in enumerate(sys_keys)}
    bath_keys = model.bath.spectrum.keys()
    bath_index = {k: i for i, k in enumerate(bath_keys)}
    levels = model.weight.level_quanta()
    rho_s = np.zeros((len(sys_keys), len(sys_keys)), dtype=complex)
    rho_b = np.zeros((len(bath_keys), len(bath_keys)), dtype=complex)
    p_w = np.zeros(len(levels))
    for basis, rho in zip(bases, states):
        for sb in basis.subblocks:
            r = rho[sb.offset:sb.stop, sb.offset:sb.stop].reshape(
                sb.system_mult, sb.bath_mult, sb.system_mult, sb.bath_mult
            )
            s_idx = [sys_index[(sb.system_quanta, g)] for g in range(1, sb.system_mult + 1)]
            b_idx = [bath_index[(sb.bath_quanta, f)] for f in range(1, sb.bath_mult + 1)]
            rho_s[np.ix_(s_idx, s_idx)] += np.einsum("afbf->ab", r)
            rho_b[np.ix_(b_idx, b_idx)] += np.einsum("afah->fh", r)
            p_w[levels.index(sb.weight_quanta)] += float(np.real(np.trace(rho[sb.offset:sb.stop, sb.offset:sb.stop])))
    return Marginals(rho_s, rho_b, p_w)


@dataclass
class SecondLawReport:
    n_samples: int
    seed: int | None
    max_statistic: float
    mean_statistic: float
    worst_sample: int
    saturated_samples: int
    max_saturated_bath_distance: float
    statistics: list[float] = field(repr=False, default_factory=list)

    @property
    def saturation_consistent(self) -> bool:
        """Near-zero statistics must come with an essentially thermal bath marginal."""
        return self.max_saturated_bath_distance <= SATURATION_DISTANCE


class SecondLawSampler:
    """Evaluates ``<w> + Delta F_S`` for block unitaries on a fixed product initial state."""

    def __init__(self, model: CompositeModel, bath_state: DiagonalState | None = None,
                 weight_state: DiagonalState | None = None, allow_nonthermal_bath: bool = False):
        bath = model.require_concrete()
        ctx = model.ctx
        tau_b = thermal_state(bath.spectrum, ctx)
        if bath_state is None:
            bath_state = tau_b
        elif trace_distance_diag(bath_state, tau_b) > TRACE_TOL and not allow_nonthermal_bath:
            raise ContractError(
                "the bound assumes a thermal initial bath; pass allow_nonthermal_bath=True to sample anyway"
            )
        w_spec = model.weight.spectrum(model.quantum)
        if weight_state is None:
            weight_state = DiagonalState.pure(w_spec, (0, 1))
        if weight_state.spectrum != w_spec:
            raise ContractError("weight state must live on the model's weight ladder")
        self.model = model
        self.bases = all_shell_bases(model)
        p_s = dict(zip(model.system.keys(), model.state.probabilities()))
        p_b = dict(zip(bath.spectrum.keys(), bath_state.probabilities()))
        p_w = dict(zip(model.weight.level_quanta(), weight_state.probabilities()))
        self.diagonals = [
            np.array([p_s[key] * p_b[(e_b, f)] * p_w[e_w] for key, e_b, f, e_w in basis.labels()])
            for basis in self.bases
        ]
        self.tau_b = np.diag(tau_b.probabilities()).astype(complex)
        self._e_s = model.system.key_energies()
        self._e_w = w_spec.key_energies()
        self._initial = self._free_energies(self.evolve([np.eye(b.dimension) for b in self.bases]))

    def evolve(self, blocks: list[np.ndarray]) -> Marginals:
        states = [(u * p) @ u.conj().T for u, p in zip(blocks, self.diagonals)]
        return shell_marginals(self.model, self.bases, states)

    def _free_energies(self, m: Marginals) -> tuple[float, float]:
        beta = self.model.ctx.beta
        f_s = matrix_free_energy(m.rho_s, self._e_s, beta)
        f_w = matrix_free_energy(np.diag(m.p_w), self._e_w, beta)
        return f_s, f_w

    def statistic(self, blocks: list[np.ndarray]) -> tuple[float, Marginals]:
        """``<w> + Delta F_S = Delta F_W + Delta F_S``; nonpositive under the bound."""
        m = self.evolve(blocks)
        f_s, f_w = self._free_energies(m)
        f_s0, f_w0 = self._initial
        return (f_w - f_w0) + (f_s - f_s0), m

    def run(self, n_samples: int, seed: int) -> SecondLawReport:
        stats = []
        saturated, worst_distance = 0, 0.0
        for i in range(n_samples):
            rng = sample_rng(seed, i)
            blocks = [haar_unitary(b.dimension, rng) for b in self.bases]
            stat, m = self.statistic(blocks)
            stats.append(stat)
            if abs(stat) < SATURATION_STAT:
                saturated += 1
                worst_distance = max(worst_distance, trace_distance(m.rho_b, self.tau_b))
        j = int(np.argmax(stats))
        return SecondLawReport(
            n_samples=n_samples, seed=seed, max_statistic=float(stats[j]),
            mean_statistic=float(np.mean(stats)), worst_sample=j,
            saturated_samples=saturated, max_saturated_bath_distance=worst_distance, statistics=stats,
        )


def second_law_sampler(model: CompositeModel, n_samples: int, seed: int, bath_state: DiagonalState | None = None,
                       weight_state: DiagonalState | None = None, allow_nonthermal_bath: bool = False) -> SecondLawReport:
    """Maximum of ``<w> + Delta F_S`` over Haar-random energy-conserving unitaries.

    The initial state is ``rho_S x rho_B x sigma_W`` on the full product space
    (every shell, every weight level). ``rho_B`` defaults to the thermal state
    and ``sigma_W`` to the weight ground state. Samples that nearly saturate the
    bound (statistic within ``1e-6`` of zero) are checked for an almost thermal
    final bath marginal.

    Raises:
        ContractError: for a non-thermal bath unless ``allow_nonthermal_bath``.
    """
    if n_samples < 1:
        raise ContractError("need at least one sample")
    sampler = SecondLawSampler(model, bath_state, weight_state, allow_nonthermal_bath)
    return sampler.run(n_samples, seed)

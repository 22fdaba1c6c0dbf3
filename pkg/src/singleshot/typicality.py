"""Haar-random extraction unitaries and the statistics of the final states they produce.

An extraction plan maps, in every admissible shell, the kept initial subspace
(the states chosen by the epsilon cut, weight at ground) isometrically into the
final subspace with the weight at level ``w``. The isometry is Haar-distributed;
everything outside the kept subspace is left untouched. The simulated global
state is the initial product state conditioned on the admissible shells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import Key, thermal_state
from .density import entropy_of_eigenvalues
from .errors import ContractError, InfeasibleError
from .extraction import epsilon_cut
from .shells import CompositeModel, ShellBasis, admissible_shells, initial_blocks, shell_basis

SeedLike = Union[int, np.random.Generator, None]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for Monte Carlo sample ``index`` under master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def _ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)


def _phase_fixed_qr(z: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    phases = d / np.abs(d)
    return q * phases[..., None, :]


def haar_unitary(dim: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-distributed ``dim x dim`` unitary.

    Gaussian columns are orthonormalised by QR and each column is rotated so the
    triangular factor has a positive diagonal, which makes the result exactly
    Haar rather than QR-implementation dependent.
    """
    if dim < 1:
        raise ContractError("dimension must be >= 1")
    return _phase_fixed_qr(_ginibre(dim, dim, as_generator(seed)))


def haar_isometry(rows: int, cols: int, seed: SeedLike = None) -> np.ndarray:
    """First ``cols`` columns of a Haar unitary on ``rows`` dimensions."""
    if not 1 <= cols <= rows:
        raise ContractError(f"need 1 <= cols <= rows, got {cols} x {rows}")
    return _phase_fixed_qr(_ginibre(rows, cols, as_generator(seed)))


# ---------------------------------------------------------------------------
# Plans


@dataclass
class ShellPlan:
    """One shell of an extraction plan.

    Index arrays point into ``basis``. ``final`` is contiguous and ordered like
    the weight-``w`` sub-blocks of the basis.
    """

    energy: int
    basis: ShellBasis
    selected: np.ndarray
    selected_values: np.ndarray
    unselected: np.ndarray
    unselected_values: np.ndarray
    final: np.ndarray
    isometry: np.ndarray | None = None

    @property
    def d_ini(self) -> int:
        return len(self.selected)

    @property
    def d_fin(self) -> int:
        return len(self.final)


@dataclass
class ShellUnitaryPlan:
    epsilon: float
    w_quanta: int
    shells: list[ShellPlan]
    admissible_mass: float

    def resample(self, seed: SeedLike) -> "ShellUnitaryPlan":
        """Draw fresh Haar isometries for every shell, in shell order."""
        rng = as_generator(seed)
        for sp in self.shells:
            sp.isometry = haar_isometry(sp.d_fin, sp.d_ini, rng)
        return self

    def max_isometry_error(self) -> float:
        return max(
            float(np.max(np.abs(sp.isometry.conj().T @ sp.isometry - np.eye(sp.d_ini))))
            for sp in self.shells
        )


def plan_structure(model: CompositeModel, epsilon: float, w_quanta: int, energies=None) -> ShellUnitaryPlan:
    """Kept/unkept initial states and final subspaces per shell, without unitaries.

    ``energies`` restricts the plan (and the conditioning of the initial state)
    to a subset of the admissible shells.

    Raises:
        InfeasibleError: naming the first shell with ``d_fin < d_ini(eps)``.
    """
    bath = model.require_concrete()
    model.weight.level_of(w_quanta)
    shells = list(admissible_shells(model))
    if energies is not None:
        missing = sorted(set(energies) - set(shells))
        if missing:
            raise ContractError(f"shells {missing} are not admissible (window {shells[0]}..{shells[-1]})")
        shells = sorted(set(energies))
    masses = []
    plans = []
    for e in shells:
        levels = sorted({0, w_quanta})
        basis = shell_basis(model, e, levels)
        cut = epsilon_cut(initial_blocks(model, e), epsilon)
        sel, sel_v, unsel, unsel_v = [], [], [], []
        for sb in basis.at_weight(0):
            p_b = bath.state_probability(sb.bath_quanta, model.ctx)
            for g in range(1, sb.system_mult + 1):
                key = (sb.system_quanta, g)
                lam = model.state[key]
                if lam == 0:
                    continue
                value = float(lam * p_b) if not isinstance(lam, float) else lam * float(p_b)
                n_keep = int(cut.h_map.get(key, 0) * sb.bath_mult)
                row = sb.offset + (g - 1) * sb.bath_mult
                for f in range(sb.bath_mult):
                    (sel if f < n_keep else unsel).append(row + f)
                    (sel_v if f < n_keep else unsel_v).append(value)
        final = [i for sb in basis.at_weight(w_quanta) for i in range(sb.offset, sb.stop)]
        if w_quanta == 0 and unsel:
            raise ContractError("a plan with w = 0 must keep the whole initial support (epsilon = 0)")
        if len(final) < len(sel):
            raise InfeasibleError(
                f"shell E={e}: d_fin={len(final)} < d_ini(eps)={len(sel)} for w={w_quanta} quanta"
            )
        masses.append(math.fsum(sel_v) + math.fsum(unsel_v))
        plans.append(ShellPlan(
            e, basis, np.array(sel, dtype=int), np.array(sel_v), np.array(unsel, dtype=int),
            np.array(unsel_v), np.array(final, dtype=int),
        ))
    total = math.fsum(masses)
    for sp in plans:
        sp.selected_values = sp.selected_values / total
        sp.unselected_values = sp.unselected_values / total
    return ShellUnitaryPlan(epsilon, w_quanta, plans, total)


def build_plan(model: CompositeModel, epsilon: float, w_quanta: int, seed: SeedLike = None, energies=None) -> ShellUnitaryPlan:
    """Extraction plan with Haar isometries from the kept subspace into the final one."""
    return plan_structure(model, epsilon, w_quanta, energies).resample(seed)


@dataclass
class PlanOutcome:
    sigma_s: np.ndarray
    sigma_w: dict[int, float]
    p_fin: dict[tuple[int, Key], float]
    offdiag: dict[tuple[int, Key, Key], complex]
    entropy_initial: float | None
    entropy_final: float | None
    shell_states: dict[int, np.ndarray] = field(default_factory=dict)


def apply_plan(model: CompositeModel, plan: ShellUnitaryPlan, keep_matrices: bool = False,
               entropies: bool = True) -> PlanOutcome:
    """Push the conditioned initial state through the plan and take partial traces.

    ``p_fin[(E, key)]`` is the weight of system label ``key`` in the changed
    (weight-``w``) part of shell ``E``; ``offdiag[(E, key, key')]`` holds the
    coherences that shell contributes to ``sigma_S``. With ``keep_matrices`` the
    full final state of every shell (in its basis order) is returned as well.
    ``entropies=False`` skips the global entropy bookkeeping, which costs one
    eigendecomposition per shell.
    """
    keys = model.system.keys()
    index = {k: i for i, k in enumerate(keys)}
    sigma_s = np.zeros((len(keys), len(keys)), dtype=complex)
    sigma_w = {0: 0.0, plan.w_quanta: 0.0}
    p_fin, offdiag, states = {}, {}, {}
    ini_vals, fin_vals = [], []
    for sp in plan.shells:
        v, p = sp.isometry, sp.selected_values
        start = sp.final[0] if len(sp.final) else 0
        for sb in sp.basis.at_weight(plan.w_quanta):
            lo = sb.offset - start
            w_block = v[lo:lo + sb.size].reshape(sb.system_mult, sb.bath_mult, -1)
            red = np.einsum("afj,j,bfj->ab", w_block, p, w_block.conj())
            ids = [index[(sb.system_quanta, g)] for g in range(1, sb.system_mult + 1)]
            sigma_s[np.ix_(ids, ids)] += red
            for a in range(sb.system_mult):
                key = (sb.system_quanta, a + 1)
                p_fin[(sp.energy, key)] = p_fin.get((sp.energy, key), 0.0) + float(red[a, a].real)
                for b in range(sb.system_mult):
                    if a != b:
                        offdiag[(sp.energy, key, (sb.system_quanta, b + 1))] = red[a, b]
        labels = list(sp.basis.labels())
        for i, val in zip(sp.unselected, sp.unselected_values):
            k = index[labels[i][0]]
            sigma_s[k, k] += val
        sigma_w[plan.w_quanta] += math.fsum(p)
        sigma_w[0] += math.fsum(sp.unselected_values)
        if entropies:
            # nonzero spectrum of V diag(p) V^dag equals that of sqrt(p) V^dag V sqrt(p)
            sq = np.sqrt(p)
            gram = sq[:, None] * (v.conj().T @ v) * sq[None, :]
            fin_vals.append(np.linalg.eigvalsh(gram))
            fin_vals.append(sp.unselected_values)
        ini_vals.append(p)
        ini_vals.append(sp.unselected_values)
        if keep_matrices:
            states[sp.energy] = _shell_state(sp)
    sigma_s = 0.5 * (sigma_s + sigma_s.conj().T)
    return PlanOutcome(
        sigma_s=sigma_s,
        sigma_w=sigma_w,
        p_fin=p_fin,
        offdiag=offdiag,
        entropy_initial=entropy_of_eigenvalues(np.concatenate(ini_vals)) if entropies else None,
        entropy_final=entropy_of_eigenvalues(np.concatenate(fin_vals)) if entropies else None,
        shell_states=states,
    )


def _shell_state(sp: ShellPlan) -> np.ndarray:
    n = sp.basis.dimension
    rho = np.zeros((n, n), dtype=complex)
    v = sp.isometry
    rho[np.ix_(sp.final, sp.final)] += (v * sp.selected_values) @ v.conj().T
    rho[sp.unselected, sp.unselected] += sp.unselected_values
    return rho


def shell_unitary(sp: ShellPlan, seed: SeedLike = None) -> np.ndarray:
    """Complete a shell plan's isometry to a unitary on the whole shell basis.

    Kept initial states go to the isometry's image, unkept ones stay put, and the
    remaining columns span the orthogonal complement (random within it).
    """
    n = sp.basis.dimension
    u = np.zeros((n, n), dtype=complex)
    u[np.ix_(sp.final, sp.selected)] = sp.isometry
    for i in sp.unselected:
        u[i, i] = 1.0
    used = set(sp.selected.tolist()) | set(sp.unselected.tolist())
    free_cols = [i for i in range(n) if i not in used]
    if free_cols:
        filled = u[:, sorted(used)]
        # orthonormal complement of the columns already placed
        q, _ = np.linalg.qr(np.hstack([filled, _ginibre(n, len(free_cols), as_generator(seed))]))
        u[:, free_cols] = q[:, len(used):]
    return u


# ---------------------------------------------------------------------------
# Statistics


# relative fluctuations below this are floating-point noise on a deterministic value
NOISE_FLOOR = 1e-10


def _loglog_fit(m, y):
    """Least-squares slope and prefactor of ``log y = log c + slope * log m``."""
    lm, ly = np.log(np.asarray(m, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lm, ly, 1)
    return float(slope), float(math.exp(intercept))


def _z(mean: float, se: float, target: float) -> float:
    diff = mean - target
    if abs(diff) <= 1e-12:
        return 0.0
    return diff / se if se > 0 else math.copysign(math.inf, diff)


@dataclass
class FluctuationEntry:
    """Sample statistics of ``P_fin`` for one shell and one system label."""

    energy: int
    level: Key
    bath_multiplicity: int
    mean: float
    std: float
    predicted_mean: float

    @property
    def rel_std(self) -> float:
        return self.std / self.mean if self.mean > 0 else math.nan

    @property
    def fluctuates(self) -> bool:
        return self.mean > 0 and self.rel_std > NOISE_FLOOR


@dataclass
class TypicalityReport:
    epsilon: float
    w_quanta: int
    n_samples: int
    seed: int
    energies: list[int]
    entries: list[FluctuationEntry]
    sigma_s_mean: list[float]
    sigma_s_se: list[float]
    sigma_s_prediction: list[float]
    gibbs: list[float]
    sigma_s_offdiag_rms: float
    offdiag_rms: dict[tuple[int, int], float]
    max_entropy_drift: float
    min_weight_mass: float

    def z_scores(self) -> list[float]:
        """Mean ``sigma_S`` diagonal against the exact Haar average (failure branch included)."""
        return [_z(m, se, p) for m, se, p in zip(self.sigma_s_mean, self.sigma_s_se, self.sigma_s_prediction)]

    def gibbs_z_scores(self) -> list[float]:
        """Mean ``sigma_S`` diagonal against the Gibbs state of the system."""
        return [_z(m, se, g) for m, se, g in zip(self.sigma_s_mean, self.sigma_s_se, self.gibbs)]

    def select(self, bath_multiplicities=None) -> list[FluctuationEntry]:
        if bath_multiplicities is None:
            return list(self.entries)
        wanted = set(bath_multiplicities)
        return [e for e in self.entries if e.bath_multiplicity in wanted]

    def scaling_fit(self, bath_multiplicities=None):
        """Fitted ``(exponent, prefactor)`` of ``std/mean = c * M_B**exponent``.

        Entries without measurable fluctuations are left out; ``(None, None)``
        when fewer than two distinct ``M_B`` values remain.
        """
        usable = [e for e in self.select(bath_multiplicities) if e.fluctuates]
        if len({e.bath_multiplicity for e in usable}) < 2:
            return None, None
        return _loglog_fit([e.bath_multiplicity for e in usable], [e.rel_std for e in usable])

    def offdiag_scaling(self) -> list[tuple[int, float]]:
        """``(M_B, rms coherence / mean population)`` per shell and degenerate system level."""
        out = []
        for (e, e_s), rms in self.offdiag_rms.items():
            level = [x for x in self.entries if x.energy == e and x.level[0] == e_s]
            out.append((level[0].bath_multiplicity, rms / float(np.mean([x.mean for x in level]))))
        return sorted(out)

    def offdiag_fit(self):
        """Fitted ``(exponent, prefactor)`` of the relative coherence against ``M_B``."""
        pts = [(m, r) for m, r in self.offdiag_scaling() if r > NOISE_FLOOR]
        if len({m for m, _ in pts}) < 2:
            return None, None
        return _loglog_fit([m for m, _ in pts], [r for _, r in pts])

    def half_power_ratios(self, bath_multiplicities=None) -> list[float]:
        """``(std/mean) / (1/sqrt(M_B))`` per entry."""
        return [e.rel_std * math.sqrt(e.bath_multiplicity) for e in self.select(bath_multiplicities)]


def predicted_sigma_s(model: CompositeModel, plan: ShellUnitaryPlan) -> np.ndarray:
    """Haar-average diagonal of ``sigma_S``: each shell's kept mass spread evenly over ``Pi_fin``."""
    keys = model.system.keys()
    index = {k: i for i, k in enumerate(keys)}
    out = np.zeros(len(keys))
    for sp in plan.shells:
        tr_a = math.fsum(sp.selected_values)
        for sb in sp.basis.at_weight(plan.w_quanta):
            for g in range(1, sb.system_mult + 1):
                out[index[(sb.system_quanta, g)]] += tr_a * sb.bath_mult / sp.d_fin
        labels = list(sp.basis.labels())
        for i, val in zip(sp.unselected, sp.unselected_values):
            out[index[labels[i][0]]] += val
    return out


def typicality_experiment(model: CompositeModel, epsilon: float, w_quanta: int, n_samples: int, seed: int,
                          energies=None) -> TypicalityReport:
    """Sample ``n_samples`` Haar plans and summarise the final-state statistics.

    Sample ``i`` draws its isometries from the stream ``(seed, i)``, so the
    report depends only on the arguments. The global entropy is tracked on the
    first sample only.
    """
    if n_samples < 2:
        raise ContractError("need at least two samples for fluctuation statistics")
    plan = plan_structure(model, epsilon, w_quanta, energies)
    keys = model.system.keys()
    off_mask = ~np.eye(len(keys), dtype=bool)
    diag, pf, od, od_all = [], {}, {}, []
    drift, min_w = 0.0, 1.0
    for i in range(n_samples):
        plan.resample(sample_rng(seed, i))
        out = apply_plan(model, plan, entropies=(i == 0))
        if i == 0:
            drift = abs(out.entropy_final - out.entropy_initial)
        diag.append(np.real(np.diag(out.sigma_s)))
        for k, v in out.p_fin.items():
            pf.setdefault(k, []).append(v)
        for (e, a, b), v in out.offdiag.items():
            if a < b:
                od.setdefault((e, a[0]), []).append(abs(v) ** 2)
        od_all.append(float(np.mean(np.abs(out.sigma_s[off_mask]) ** 2)) if off_mask.any() else 0.0)
        min_w = min(min_w, out.sigma_w[w_quanta])

    diag = np.array(diag)
    entries = []
    for sp in plan.shells:
        tr_a = math.fsum(sp.selected_values)
        for sb in sp.basis.at_weight(w_quanta):
            for g in range(1, sb.system_mult + 1):
                vals = np.array(pf[(sp.energy, (sb.system_quanta, g))])
                entries.append(FluctuationEntry(
                    energy=sp.energy, level=(sb.system_quanta, g), bath_multiplicity=sb.bath_mult,
                    mean=float(vals.mean()), std=float(vals.std(ddof=1)),
                    predicted_mean=tr_a * sb.bath_mult / sp.d_fin,
                ))
    return TypicalityReport(
        epsilon=epsilon, w_quanta=w_quanta, n_samples=n_samples, seed=seed,
        energies=[sp.energy for sp in plan.shells], entries=entries,
        sigma_s_mean=diag.mean(axis=0).tolist(),
        sigma_s_se=(diag.std(axis=0, ddof=1) / math.sqrt(n_samples)).tolist(),
        sigma_s_prediction=predicted_sigma_s(model, plan).tolist(),
        gibbs=thermal_state(model.system, model.ctx).probabilities().tolist(),
        sigma_s_offdiag_rms=math.sqrt(float(np.mean(od_all))),
        offdiag_rms={e: math.sqrt(float(np.mean(v))) for e, v in sorted(od.items())},
        max_entropy_drift=drift, min_weight_mass=min_w,
    )



# ---------------------------------------------------------------------------
# Haar moments


@dataclass
class HaarMomentReport:
    dim: int
    m: int
    n_samples: int
    mean: float
    mean_se: float
    predicted_mean: float
    variance: float
    predicted_variance: float
    exact_variance: float
    offdiag_second_moment: float
    offdiag_se: float
    predicted_offdiag: float
    exact_offdiag: float
    rank_one_normalized: bool

    @property
    def mean_z(self) -> float:
        if self.mean_se == 0:
            return 0.0 if abs(self.mean - self.predicted_mean) < 1e-12 else math.inf
        return (self.mean - self.predicted_mean) / self.mean_se

    @property
    def variance_rel_error(self) -> float:
        return abs(self.variance - self.predicted_variance) / self.predicted_variance

    @property
    def offdiag_rel_error(self) -> float:
        return abs(self.offdiag_second_moment - self.predicted_offdiag) / self.predicted_offdiag


def haar_moment_check(a: np.ndarray, m: int, n_samples: int, seed: int) -> HaarMomentReport:
    """Monte Carlo moments of ``s = sum_{n<m} <n|V A V^dag|n>`` under Haar ``V``.

    The predictions are the ones used for typicality: ``<s> = m tr[A] / d``,
    ``Var s = m (1 - m/d) tr[A]^2 / (d (d + 1))`` and, for the coherences,
    ``<|<n|VAV^dag|n'>|^2> = tr[A^2] / (d (d + 1))``. The last two are exact only
    for rank-one ``A``; the exact Haar values are reported alongside.
    """
    a = np.asarray(a, dtype=complex)
    d = a.shape[0]
    if not 1 <= m <= d:
        raise ContractError(f"need 1 <= m <= dim, got m={m}, dim={d}")
    s_vals = np.empty(n_samples)
    o_vals = np.empty(n_samples)
    off = ~np.eye(d, dtype=bool)
    for i in range(n_samples):
        v = haar_unitary(d, sample_rng(seed, i))
        b = v @ a @ v.conj().T
        s_vals[i] = float(np.real(np.trace(b[:m, :m])))
        o_vals[i] = float(np.mean(np.abs(b[off]) ** 2)) if d > 1 else 0.0
    tr_a = float(np.real(np.trace(a)))
    tr_a2 = float(np.real(np.trace(a @ a)))
    rank_one = bool(np.linalg.matrix_rank(a, tol=1e-10) == 1 and abs(tr_a - 1) < 1e-12)
    var_exact = (m - m * m / d) * (tr_a2 - tr_a**2 / d) / (d * d - 1) if d > 1 else 0.0
    off_exact = (d * tr_a2 - tr_a**2) / (d * (d * d - 1)) if d > 1 else 0.0
    return HaarMomentReport(
        dim=d, m=m, n_samples=n_samples,
        mean=float(s_vals.mean()), mean_se=float(s_vals.std(ddof=1) / math.sqrt(n_samples)),
        predicted_mean=m * tr_a / d,
        variance=float(s_vals.var(ddof=1)),
        predicted_variance=m * (1 - m / d) * tr_a**2 / (d * (d + 1)),
        exact_variance=var_exact,
        offdiag_second_moment=float(o_vals.mean()),
        offdiag_se=float(o_vals.std(ddof=1) / math.sqrt(n_samples)),
        predicted_offdiag=tr_a2 / (d * (d + 1)),
        exact_offdiag=off_exact,
        rank_one_normalized=rank_one,
    )

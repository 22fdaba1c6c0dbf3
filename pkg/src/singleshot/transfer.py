"""Free-energy transfer quantity for general weight-state changes.

``<w> = F(sigma_W') - F(sigma_W)`` must satisfy ``<w> <= F(rho_S) - F(rho_S')``
for any energy-conserving unitary on a product initial state with a thermal
bath. This is a necessary condition only: a verdict of "allowed" means the
transfer is not ruled out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import DiagonalState, Spectrum, ThermalContext, free_energy
from .density import matrix_free_energy
from .errors import ContractError

ALLOWED_TOL = 1e-9
CASE_TOL = 1e-12

State = Union[DiagonalState, np.ndarray]


def state_free_energy(state: State, spectrum: Spectrum, ctx: ThermalContext) -> float:
    """Free energy of a diagonal state or a dense density matrix in the ``spectrum`` basis."""
    if isinstance(state, DiagonalState):
        if state.spectrum != spectrum:
            raise ContractError("state does not live on the given spectrum")
        return free_energy(state, ctx)
    rho = np.asarray(state)
    if rho.shape != (spectrum.dimension, spectrum.dimension):
        raise ContractError(f"matrix shape {rho.shape} does not match spectrum dimension {spectrum.dimension}")
    return matrix_free_energy(rho, spectrum.key_energies(), ctx.beta)


def _populations(state: State) -> np.ndarray:
    if isinstance(state, DiagonalState):
        return state.probabilities()
    return np.real(np.diag(np.asarray(state)))


def _is_diagonal(state: State) -> bool:
    if isinstance(state, DiagonalState):
        return True
    rho = np.asarray(state)
    return np.max(np.abs(rho - np.diag(np.diag(rho))), initial=0.0) <= CASE_TOL


def transfer_quantity(sigma_w: State, sigma_w_final: State, weight: Spectrum, ctx: ThermalContext) -> float:
    """``<w> = Delta F_W = Delta U_W - T Delta S_W``."""
    return state_free_energy(sigma_w_final, weight, ctx) - state_free_energy(sigma_w, weight, ctx)


def classify_weight_transfer(sigma_w: State, sigma_w_final: State) -> str:
    """One of ``single-level``, ``single-to-window``, ``shift`` or ``general``."""
    p0, p1 = _populations(sigma_w), _populations(sigma_w_final)
    pure0 = _is_diagonal(sigma_w) and np.isclose(p0.max(), 1.0, atol=CASE_TOL, rtol=0)
    pure1 = _is_diagonal(sigma_w_final) and np.isclose(p1.max(), 1.0, atol=CASE_TOL, rtol=0)
    if pure0 and pure1:
        return "single-level"
    if pure0:
        return "single-to-window"
    if _is_diagonal(sigma_w) and _is_diagonal(sigma_w_final):
        nz0 = np.flatnonzero(p0 > CASE_TOL)
        nz1 = np.flatnonzero(p1 > CASE_TOL)
        if len(nz0) == len(nz1):
            shift = nz1[0] - nz0[0]
            lo, hi = nz0[0], nz0[-1] + 1
            if hi + shift <= len(p1) and np.allclose(p0[lo:hi], p1[lo + shift:hi + shift], atol=CASE_TOL, rtol=0):
                return "shift"
    return "general"


@dataclass
class TransferVerdict:
    transfer_quantity: float
    bound: float
    margin: float
    allowed: bool
    case_tag: str

    @property
    def label(self) -> str:
        return "not ruled out" if self.allowed else "ruled out"


def check_transfer(
    rho_s: State,
    rho_s_final: State,
    system: Spectrum,
    sigma_w: State,
    sigma_w_final: State,
    weight: Spectrum,
    ctx: ThermalContext,
) -> TransferVerdict:
    """Test ``<w> <= F(rho_S) - F(rho_S')`` for a proposed transfer."""
    w = transfer_quantity(sigma_w, sigma_w_final, weight, ctx)
    bound = state_free_energy(rho_s, system, ctx) - state_free_energy(rho_s_final, system, ctx)
    margin = bound - w
    return TransferVerdict(
        transfer_quantity=w,
        bound=bound,
        margin=margin,
        allowed=margin >= -ALLOWED_TOL,
        case_tag=classify_weight_transfer(sigma_w, sigma_w_final),
    )

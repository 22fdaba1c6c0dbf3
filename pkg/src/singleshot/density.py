"""Dense density-matrix helpers for small Hilbert spaces.

Density matrices are plain complex ``numpy`` arrays; these functions check and
measure them.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

EIG_CLAMP = 1e-14


def validate_density_matrix(rho: np.ndarray, *, herm_tol=1e-12, trace_tol=1e-12, psd_tol=1e-10):
    """Raise ``ContractError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > herm_tol:
        raise ContractError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ContractError(f"density matrix has trace {tr!r}")
    if np.linalg.eigvalsh(rho).min(initial=0.0) < -psd_tol:
        raise ContractError("density matrix has negative eigenvalues")
    return rho


def von_neumann_entropy(rho: np.ndarray) -> float:
    """``-tr[rho ln rho]`` in nats; eigenvalues below 1e-14 count as zero."""
    evals = np.linalg.eigvalsh(np.asarray(rho))
    evals = evals[evals > EIG_CLAMP]
    return float(-np.sum(evals * np.log(evals)))


def entropy_of_eigenvalues(evals) -> float:
    evals = np.asarray(evals, dtype=float)
    evals = evals[evals > EIG_CLAMP]
    return float(-np.sum(evals * np.log(evals)))


def matrix_free_energy(rho: np.ndarray, energies, beta: float) -> float:
    """``tr[H rho] - S(rho) / beta`` for ``H = diag(energies)``."""
    rho = np.asarray(rho)
    u = float(np.dot(np.real(np.diag(rho)), np.asarray(energies, dtype=float)))
    return u - von_neumann_entropy(rho) / beta


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``(1/2) ||a - b||_1``."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b)))))


def partial_trace(rho: np.ndarray, dims: tuple[int, ...], keep: tuple[int, ...]) -> np.ndarray:
    """Reduce ``rho`` on a tensor product with factor dimensions ``dims`` to ``keep``."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    keep = tuple(sorted(keep))
    tensor = np.asarray(rho).reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract traced factors pairwise, highest index first so axis numbers stay valid
    for count, i in enumerate(sorted(traced, reverse=True)):
        remaining = n - count
        tensor = np.trace(tensor, axis1=i, axis2=i + remaining)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return tensor.reshape(d_keep, d_keep)

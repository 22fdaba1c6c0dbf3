"""Work cost of forming a diagonal state from the thermal state.

The binding quantity is ``mu = max s(E, g) / t(E)``, the smallest ``lambda``
with ``sigma <= lambda * tau``; the cost is ``w_min = ln(mu) / beta``. Allowing
the produced state to sit within trace distance ``eps`` of the target lowers
``mu`` to ``mu_eps``, the smallest cap ``lambda`` whose excess mass
``R(lambda) = sum max(s - lambda t, 0)`` fits inside the ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DiagonalState, Key, ThermalContext, thermal_state
from .errors import ContractError

FEASIBILITY_TOL = 1e-12
BISECTION_TOL = 1e-10


@dataclass
class FormationReport:
    mu: float
    w_min: float
    binding_level: Key
    epsilon: float = 0.0
    mu_epsilon: float | None = None
    w_min_epsilon: float | None = None
    mu_epsilon_closed_form: float | None = None
    relaxed_state: DiagonalState | None = None


def _ratios(target: DiagonalState, ctx: ThermalContext):
    t = thermal_state(target.spectrum, ctx).probabilities()
    s = target.probabilities()
    return s, t, s / t


def formation_mu(target: DiagonalState, ctx: ThermalContext) -> FormationReport:
    """``mu`` and the work of formation ``w_min = ln(mu) / beta``.

    Ties for the largest ratio resolve to the smallest ``(E, g)`` label.
    """
    s, t, ratio = _ratios(target, ctx)
    keys = target.keys()
    i = int(np.argmax(ratio))  # first maximum == smallest label in canonical order
    mu = float(ratio[i])
    return FormationReport(mu=mu, w_min=math.log(mu) / ctx.beta, binding_level=keys[i])


def excess_mass(s: np.ndarray, t: np.ndarray, lam: float) -> float:
    """``R(lambda) = sum_i max(s_i - lambda t_i, 0)``: mass above the cap."""
    return math.fsum(np.maximum(s - lam * t, 0.0))


def mu_epsilon_bisection(s, t, epsilon, tol=BISECTION_TOL) -> float:
    """Smallest ``lambda`` in ``[1, mu]`` with ``R(lambda) <= epsilon``, by bisection.

    Stops when the bracket is below ``tol`` or, for very large ratios, when the
    two ends are adjacent floats.
    """
    hi = float(np.max(s / t))
    lo = 1.0
    if excess_mass(s, t, lo) <= epsilon:
        return lo
    # R is nonincreasing in lambda: invariant R(lo) > eps >= R(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if excess_mass(s, t, mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def mu_epsilon_closed_form(s, t, epsilon) -> float:
    """Solve ``R(lambda) = epsilon`` exactly over the active set of largest ratios.

    ``R`` is piecewise linear; on the piece where the ``k`` largest ratios are
    capped, ``R(lambda) = S_k - lambda T_k`` with prefix sums ``S_k`` and ``T_k``.
    """
    ratio = s / t
    order = np.argsort(-ratio, kind="stable")
    r_sorted = ratio[order]
    s_pref = np.cumsum(s[order])
    t_pref = np.cumsum(t[order])
    for k in range(len(order)):
        lam = (s_pref[k] - epsilon) / t_pref[k]
        lower = r_sorted[k + 1] if k + 1 < len(order) else -math.inf
        if lower <= lam <= r_sorted[k]:
            return max(1.0, float(lam))
    return 1.0


def relaxed_target(target: DiagonalState, t: np.ndarray, lam: float) -> DiagonalState:
    """Clip the target at ``lam * t`` and put the removed mass back below the cap.

    Removed mass is re-deposited greedily, lowest ratio ``s / t`` first.
    """
    s = target.probabilities()
    cap = lam * t
    out = np.minimum(s, cap)
    removed = math.fsum(s - out)
    for i in np.argsort(s / t, kind="stable"):
        if removed <= 0:
            break
        room = max(cap[i] - out[i], 0.0)
        add = min(room, removed)
        out[i] += add
        removed -= add
    out = out / math.fsum(out)
    return DiagonalState(target.spectrum, out.tolist())


def formation_mu_epsilon(target: DiagonalState, ctx: ThermalContext, epsilon: float) -> FormationReport:
    """``mu_eps`` by bisection, cross-checked against the piecewise-linear closed form.

    The trace-distance ball uses ``D = (1/2) sum |delta|``; only diagonal relaxed
    states are considered.
    """
    if not (0 <= epsilon < 1):
        raise ContractError(f"epsilon must lie in [0, 1), got {epsilon!r}")
    report = formation_mu(target, ctx)
    s, t, _ = _ratios(target, ctx)
    if epsilon == 0:
        mu_eps = closed = report.mu
    else:
        mu_eps = mu_epsilon_bisection(s, t, epsilon)
        closed = mu_epsilon_closed_form(s, t, epsilon)
    report.epsilon = epsilon
    report.mu_epsilon = mu_eps
    report.mu_epsilon_closed_form = closed
    report.w_min_epsilon = math.log(mu_eps) / ctx.beta
    report.relaxed_state = target if epsilon == 0 else relaxed_target(target, t, mu_eps)
    return report


@dataclass
class FeasibilityVerdict:
    feasible: bool
    margins: dict[Key, float]
    binding_level: Key


def formation_feasible(target: DiagonalState, w: float, ctx: ThermalContext) -> FeasibilityVerdict:
    """Check ``s(E, g) <= exp(-beta (E - w)) / Z`` at every label.

    Margins are ``exp(beta w) t(E) - s(E, g)``; a label passes if its margin is
    at least ``-1e-12``.
    """
    s, t, _ = _ratios(target, ctx)
    margins = t * math.exp(ctx.beta * w) - s
    keys = target.keys()
    i = int(np.argmin(margins))
    return FeasibilityVerdict(
        feasible=bool(np.all(margins >= -FEASIBILITY_TOL)),
        margins={k: float(m) for k, m in zip(keys, margins)},
        binding_level=keys[i],
    )


def interpolate_to_thermal(target: DiagonalState, ctx: ThermalContext, x: float) -> DiagonalState:
    """``(1 - x) * target + x * tau``: a path that lowers ``mu`` monotonically."""
    t = thermal_state(target.spectrum, ctx).probabilities()
    p = (1 - x) * target.probabilities() + x * t
    return DiagonalState(target.spectrum, (p / math.fsum(p)).tolist())


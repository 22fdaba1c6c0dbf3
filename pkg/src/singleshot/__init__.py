"""Single-shot work extraction under thermal operations.

Bounds on the work that can be lifted into a weight from one copy of a
diagonal system state in contact with a bath, their brute-force verification
on explicit finite baths, and Haar-sampling checks of the typical final state.
"""

from .core import (
    DiagonalState,
    Spectrum,
    ThermalContext,
    entropy,
    free_energy,
    log_partition_function,
    mean_energy,
    partition_function,
    thermal_free_energy,
    thermal_state,
    trace_distance_diag,
)
from .errors import ConfigError, ContractError, InfeasibleError, SizeCapError
from .extraction import (
    epsilon_cut,
    f_min_epsilon,
    max_work,
    multilevel_max_work,
    multilevel_surplus,
    multilevel_surplus_direct,
    perfect_work,
    surplus_asymptote,
)
from .formation import formation_feasible, formation_mu, formation_mu_epsilon
from .shells import (
    CompositeModel,
    ConcreteBath,
    IdealBath,
    WeightModel,
    admissible_shells,
    enumerate_shells,
    final_dimension,
    initial_blocks,
    truncation_tail,
)
from .transfer import check_transfer, transfer_quantity

__version__ = "0.1.0"

__all__ = [
    "CompositeModel",
    "ConcreteBath",
    "ConfigError",
    "ContractError",
    "DiagonalState",
    "IdealBath",
    "InfeasibleError",
    "SizeCapError",
    "Spectrum",
    "ThermalContext",
    "WeightModel",
    "admissible_shells",
    "check_transfer",
    "entropy",
    "enumerate_shells",
    "epsilon_cut",
    "f_min_epsilon",
    "final_dimension",
    "formation_feasible",
    "formation_mu",
    "formation_mu_epsilon",
    "free_energy",
    "initial_blocks",
    "log_partition_function",
    "max_work",
    "mean_energy",
    "multilevel_max_work",
    "multilevel_surplus",
    "multilevel_surplus_direct",
    "partition_function",
    "perfect_work",
    "surplus_asymptote",
    "thermal_free_energy",
    "thermal_state",
    "trace_distance_diag",
    "transfer_quantity",
    "truncation_tail",
]

"""YAML model configuration: parsing, validation and canonical echo.

Schema (all energies are integers in quanta; ``quantum`` is the only real energy)::

    quantum: 1.0
    beta: 0.6931471805599453      # or  log_base: 2   (beta = ln(2) / quantum)
    system:
      levels: [[0, 2]]            # (energy_quanta, multiplicity)
      populations: ["1", "0"]     # numbers, or strings such as "1/3" for exact rationals
    bath:
      mode: concrete              # concrete | ideal
      base: 2                     # concrete: M_B(n) = m0 * base**n, n = 0..max_level
      max_level: 9                #   (or an explicit `levels` list)
      m0: 1
    weight:
      spacing: 1
      max_level: 1
    truncation: null
    caps:
      shell_dim: 4096
    target: [...]                 # optional, formation target populations
    transfer:                     # optional, for transfer-check
      system_final: [...]
      weight_initial: [...]
      weight_final: [...]
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from .core import DiagonalState, Spectrum, ThermalContext
from .errors import ConfigError, ContractError
from .shells import DEFAULT_SHELL_CAP, ConcreteBath, CompositeModel, IdealBath, WeightModel

_TOP_KEYS = {"quantum", "beta", "log_base", "system", "bath", "weight", "truncation", "caps", "target", "transfer"}


def _number(x, where):
    if isinstance(x, bool):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError:
            raise ConfigError(f"{where}: cannot read {x!r} as a number") from None
    raise ConfigError(f"{where}: expected a number, got {x!r}")


def _populations(raw, where):
    if not isinstance(raw, list):
        raise ConfigError(f"{where}: expected a list of populations")
    return [_number(x, f"{where}[{i}]") for i, x in enumerate(raw)]


def _levels(raw, where):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{where}: expected a nonempty list of [energy_quanta, multiplicity]")
    out = []
    for i, pair in enumerate(raw):
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in pair)):
            raise ConfigError(f"{where}[{i}]: expected [integer quanta, integer multiplicity], got {pair!r}")
        out.append((pair[0], pair[1]))
    return out


def _int(x, where, minimum=None):
    if not isinstance(x, int) or isinstance(x, bool):
        raise ConfigError(f"{where}: expected an integer, got {x!r}")
    if minimum is not None and x < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {x}")
    return x


def _echo_number(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


@dataclass
class ModelConfig:
    """Parsed configuration; ``to_dict`` gives the canonical form used for hashing."""

    quantum: float
    beta: float
    log_base: int | None
    system_levels: list[tuple[int, int]]
    populations: list
    bath_mode: str
    bath_levels: list[tuple[int, int]] | None
    bath_m0: float
    weight_spacing: int
    weight_max_level: int
    truncation: int | None
    shell_cap: int
    target: list | None = None
    transfer: dict[str, list] | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("quantum", "system", "bath", "weight"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        quantum = float(_number(data["quantum"], "quantum"))
        if ("beta" in data) == ("log_base" in data):
            raise ConfigError("give exactly one of 'beta' or 'log_base'")
        log_base = None
        if "log_base" in data:
            log_base = data["log_base"]
            if not isinstance(log_base, int) or isinstance(log_base, bool) or log_base < 2:
                raise ConfigError("log_base must be an integer >= 2")
            beta = math.log(log_base) / quantum
        else:
            beta = float(_number(data["beta"], "beta"))

        system = data["system"]
        if not isinstance(system, dict) or "levels" not in system or "populations" not in system:
            raise ConfigError("system needs 'levels' and 'populations'")
        bath = data["bath"]
        if not isinstance(bath, dict):
            raise ConfigError("bath must be a mapping")
        mode = bath.get("mode", "concrete")
        if mode == "concrete":
            if "levels" in bath:
                bath_levels = _levels(bath["levels"], "bath.levels")
            else:
                try:
                    base = _int(bath["base"], "bath.base", 2)
                    top = _int(bath["max_level"], "bath.max_level", 0)
                    m0 = _int(bath.get("m0", 1), "bath.m0", 1)
                except KeyError as err:
                    raise ConfigError(f"concrete bath needs 'levels' or 'base' and 'max_level' (missing {err})") from None
                bath_levels = [(n, m0 * base**n) for n in range(top + 1)]
            bath_m0 = bath_levels[0][1]
        elif mode == "ideal":
            bath_levels = None
            bath_m0 = float(_number(bath.get("m0", 1), "bath.m0"))
        else:
            raise ConfigError(f"bath.mode must be 'concrete' or 'ideal', got {mode!r}")
        weight = data["weight"]
        if not isinstance(weight, dict):
            raise ConfigError("weight must be a mapping")
        caps = data.get("caps") or {}
        transfer = data.get("transfer")
        if transfer is not None:
            missing = {"system_final", "weight_initial", "weight_final"} - set(transfer)
            if missing:
                raise ConfigError(f"transfer section is missing {sorted(missing)}")
            transfer = {k: _populations(transfer[k], f"transfer.{k}") for k in ("system_final", "weight_initial", "weight_final")}
        return cls(
            quantum=quantum,
            beta=beta,
            log_base=log_base,
            system_levels=_levels(system["levels"], "system.levels"),
            populations=_populations(system["populations"], "system.populations"),
            bath_mode=mode,
            bath_levels=bath_levels,
            bath_m0=bath_m0,
            weight_spacing=_int(weight.get("spacing", 1), "weight.spacing", 1),
            weight_max_level=_int(weight.get("max_level", 1), "weight.max_level", 0),
            truncation=None if data.get("truncation") is None else _int(data["truncation"], "truncation", 0),
            shell_cap=_int(caps.get("shell_dim", DEFAULT_SHELL_CAP), "caps.shell_dim", 1),
            target=_populations(data["target"], "target") if data.get("target") is not None else None,
            transfer=transfer,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"quantum": self.quantum}
        if self.log_base is not None:
            out["log_base"] = self.log_base
        else:
            out["beta"] = self.beta
        out["system"] = {
            "levels": [list(p) for p in self.system_levels],
            "populations": [_echo_number(x) for x in self.populations],
        }
        if self.bath_mode == "concrete":
            out["bath"] = {"mode": "concrete", "levels": [list(p) for p in self.bath_levels]}
        else:
            out["bath"] = {"mode": "ideal", "m0": self.bath_m0}
        out["weight"] = {"spacing": self.weight_spacing, "max_level": self.weight_max_level}
        out["truncation"] = self.truncation
        out["caps"] = {"shell_dim": self.shell_cap}
        if self.target is not None:
            out["target"] = [_echo_number(x) for x in self.target]
        if self.transfer is not None:
            out["transfer"] = {k: [_echo_number(x) for x in v] for k, v in self.transfer.items()}
        return out

    def sha256(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def context(self) -> ThermalContext:
        return ThermalContext(self.beta)

    def system_spectrum(self) -> Spectrum:
        return Spectrum(self.quantum, self.system_levels)

    def build(self) -> CompositeModel:
        """Construct and validate the composite model.

        Raises:
            ConfigError: naming the first violated invariant.
        """
        try:
            ctx = self.context()
            state = DiagonalState(self.system_spectrum(), self.populations)
            if self.bath_mode == "concrete":
                bath = ConcreteBath(Spectrum(self.quantum, self.bath_levels))
            else:
                bath = IdealBath(self.bath_m0)
            weight = WeightModel(self.weight_spacing, self.weight_max_level)
            return CompositeModel(state, bath, weight, ctx, self.truncation, self.shell_cap)
        except ContractError as err:
            raise ConfigError(str(err)) from None

    def target_state(self) -> DiagonalState:
        try:
            return DiagonalState(self.system_spectrum(), self.target if self.target is not None else self.populations)
        except ContractError as err:
            raise ConfigError(f"target: {err}") from None


def load_config(path) -> ModelConfig:
    """Read a YAML config file into a ``ModelConfig`` (no model validation yet)."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"invalid YAML in {path}: {err}") from None
    return ModelConfig.from_dict(data)


def dump_config(config: ModelConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)

"""Run configuration for the command-line front end.

A config is a JSON object. Unknown keys anywhere are rejected. Example::

    {
      "design": {"m1": 60, "m2": 120, "m_max": 330, "rho_xy": 0.7, "rho_xz": 0.5, "c": 2.206},
      "design_grid": {"c": [-0.596, 2.206]},
      "scenarios": [{"label": "null"}],
      "designs": ["F2in1", "S2in1-planned", "S2in1-max", "F2in1-CHW"],
      "replicates": {"null": 100000, "alternative": 10000, "empirical_cmin": 1000000},
      "seed": 2024
    }
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .design import DesignParams, EffectScenario
from .sim import AccrualModel, calibrate_accrual

GRID_KEYS = {
    "alpha", "power_target", "m1", "m2", "m_max", "rho_xy", "rho_xz", "c", "m_phase2",
    "cap_ratio", "info_fraction",
}


class ConfigError(ValueError):
    """Invalid run configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants", validate_default=True)


class DesignSpec(_Strict):
    alpha: float = 0.025
    power_target: float = 0.9
    m1: float = 60
    m2: float = 120
    m_max: float = 330
    rho_xy: float = 0.7
    rho_xz: float = 0.5
    c: float = 2.206
    m_phase2: float = 118


class ScenarioSpec(_Strict):
    label: str = ""
    hr_os: float = 1.0
    hr_pfs: float = 1.0
    orr_c: float = 0.1
    orr_t: float = 0.1
    n_per_arm_interim: int = 60


class Replicates(_Strict):
    null: int = Field(100_000, ge=1)
    alternative: int = Field(10_000, ge=1)
    empirical_cmin: int = Field(1_000_000, ge=100_000)


class AccrualSpec(_Strict):
    rate: float = 6.0
    control_median_os: Optional[float] = None
    control_median_pfs: Optional[float] = None
    n_cap_phase2: int = 180
    n_cap_phase3: int = 500

    @model_validator(mode="after")
    def _both_or_neither(self):
        if (self.control_median_os is None) != (self.control_median_pfs is None):
            raise ValueError("give both control medians, or neither to calibrate them")
        return self


class CGrid(_Strict):
    start: float
    stop: float
    step: float = Field(gt=0)

    def values(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(n)]


class PowerGrid(_Strict):
    hr: Optional[list[float]] = None
    hr_os: Optional[list[float]] = None
    hr_pfs: Optional[list[float]] = None
    orr_c: list[float] = [0.1]
    orr_t: list[float] = [0.3]

    @model_validator(mode="after")
    def _hr_choice(self):
        if self.hr is not None and (self.hr_os is not None or self.hr_pfs is not None):
            raise ValueError("use either 'hr' or 'hr_os'/'hr_pfs', not both")
        for name in ("hr", "hr_os", "hr_pfs", "orr_c", "orr_t"):
            values = getattr(self, name)
            if values is not None and not values:
                raise ValueError(f"power_grid.{name} must not be empty")
        return self

    def points(self):
        if self.hr is not None:
            pairs = [(h, h) for h in self.hr]
        else:
            pairs = list(itertools.product(self.hr_os or [1.0], self.hr_pfs or [1.0]))
        for (hr_os, hr_pfs), orr_c, orr_t in itertools.product(pairs, self.orr_c, self.orr_t):
            yield dict(hr_os=hr_os, hr_pfs=hr_pfs, orr_c=orr_c, orr_t=orr_t)


class OutputSpec(_Strict):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Strict):
    design: DesignSpec = DesignSpec()
    design_grid: dict[str, list[float]] = {}
    scenarios: list[ScenarioSpec] = [ScenarioSpec(label="null")]
    designs: Optional[list[str]] = None
    replicates: Replicates = Replicates()
    seed: int = Field(0, ge=0)
    accrual: Optional[AccrualSpec] = None
    c_grid: Union[CGrid, list[float], None] = None
    empirical: bool = False
    power_grid: Optional[PowerGrid] = None
    output: OutputSpec = OutputSpec()

    @field_validator("design_grid")
    @classmethod
    def _grid_keys(cls, grid):
        unknown = set(grid) - GRID_KEYS
        if unknown:
            raise ValueError(f"unknown design_grid keys: {sorted(unknown)}")
        for key, values in grid.items():
            if not values:
                raise ValueError(f"design_grid.{key} must not be empty")
        return grid

    @field_validator("c_grid")
    @classmethod
    def _sorted(cls, grid):
        if isinstance(grid, list):
            if not grid:
                raise ValueError("c_grid must not be empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError("c_grid must be strictly increasing")
        elif isinstance(grid, CGrid) and grid.stop < grid.start:
            raise ValueError("c_grid.stop must not be below c_grid.start")
        return grid

    # -- resolved domain objects -------------------------------------------

    def base_design(self) -> DesignParams:
        return DesignParams(**self.design.model_dump())

    def design_points(self) -> list[tuple[dict, DesignParams]]:
        """Cartesian product of ``design_grid`` applied to the base design."""
        base = self.base_design()
        keys = list(self.design_grid)
        out = []
        for values in itertools.product(*(self.design_grid[k] for k in keys)):
            changes = dict(zip(keys, values))
            out.append((changes, base.with_(**changes)))
        return out

    def effect_scenarios(self) -> list[EffectScenario]:
        return [EffectScenario(**s.model_dump()) for s in self.scenarios]

    def accrual_model(self) -> AccrualModel | None:
        if self.accrual is None:
            return None
        spec = self.accrual
        if spec.control_median_os is None:
            return calibrate_accrual(rate=spec.rate, n_cap_phase2=spec.n_cap_phase2,
                                     n_cap_phase3=spec.n_cap_phase3)
        return AccrualModel(**spec.model_dump())

    def cutoffs(self) -> list[float]:
        if self.c_grid is None:
            raise ConfigError("c_grid is required for this command")
        return self.c_grid.values() if isinstance(self.c_grid, CGrid) else list(self.c_grid)

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        """Short hash of everything that affects results (not the output spec)."""
        payload = self.canonical()
        payload.pop("output")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the default config.

    Raises:
        ConfigError: With the validation diagnostics on any problem.
    """
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(raw)
        cfg.base_design()
        cfg.design_points()
        cfg.effect_scenarios()
    except ConfigError:
        raise
    except ValueError as exc:  # includes pydantic.ValidationError
        raise ConfigError(str(exc)) from exc
    return cfg

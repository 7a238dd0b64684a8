"""
Run configuration.

Defaults < YAML file < command-line flags. The file comes from `--config`,
else from the BLOCKMIX_CONFIG_PATH environment variable. Every result file
records the resolved configuration.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .binning import choose_num_bins
from .constants import (
    DEFAULT_B_MAX,
    DEFAULT_BINS_EXPONENT,
    DEFAULT_G_MAX,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_REFINE_MAX_ITERATIONS,
    DEFAULT_REFINE_TOLERANCE,
    DEFAULT_REL_TOLERANCE,
    DEFAULT_RESTARTS,
    NoiseFamily,
)
from .errors import ConfigError
from .selection import CandidateGrid, EMConfig
from .settings import Settings
from .simulation import SimulationConfig

DEFAULT_TARGET_MISCL = 0.05

_EXCLUSIVE_KEYS: tuple[tuple[str, str], ...] = (
    ("simulation.tau", "simulation.target_miscl"),
    ("binning.bins", "binning.bins_exponent"),
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BinningOptions(_Section):
    bins: int | None = Field(default=None, ge=2)
    bins_exponent: int = Field(default=DEFAULT_BINS_EXPONENT, ge=1)

    def num_bins(self, n: int) -> int:
        return self.bins if self.bins is not None else choose_num_bins(n, self.bins_exponent)


class SelectionOptions(_Section):
    bmax: int = Field(default=DEFAULT_B_MAX, ge=1)
    gmax: int = Field(default=DEFAULT_G_MAX, ge=1)
    restarts: int = Field(default=DEFAULT_RESTARTS, ge=1)
    max_iter: int = Field(default=DEFAULT_MAX_ITERATIONS, ge=1)
    tol: float = Field(default=DEFAULT_REL_TOLERANCE, ge=0)
    epsilon: float | None = Field(default=None, gt=0)


class RefinementOptions(_Section):
    enabled: bool = True
    max_iter: int = Field(default=DEFAULT_REFINE_MAX_ITERATIONS, ge=1)
    tol: float = Field(default=DEFAULT_REFINE_TOLERANCE, ge=0)


class SimulationOptions(_Section):
    blocks: int = Field(default=3, ge=1)
    components: int = Field(default=3, ge=1)
    block_size: int = Field(default=6, ge=3)
    n: int = Field(default=400, ge=2)
    noise: NoiseFamily = NoiseFamily.GAUSSIAN
    tau: float | None = Field(default=None, ge=0)
    target_miscl: float | None = Field(default=None, gt=0, lt=1)

    @model_validator(mode="after")
    def _exclusive(self) -> "SimulationOptions":
        if self.tau is not None and self.target_miscl is not None:
            raise ValueError("tau and target_miscl are mutually exclusive")
        return self


class RunConfig(_Section):
    seed: int = 1
    threads: int = Field(default=1, ge=1)
    categorical: list[str] = Field(default_factory=list)
    infer_categorical: bool = False
    binning: BinningOptions = Field(default_factory=BinningOptions)
    selection: SelectionOptions = Field(default_factory=SelectionOptions)
    refinement: RefinementOptions = Field(default_factory=RefinementOptions)
    simulation: SimulationOptions = Field(default_factory=SimulationOptions)

    def em_config(self, seed: int | None = None) -> EMConfig:
        s = self.selection
        return EMConfig(
            max_iterations=s.max_iter,
            rel_tolerance=s.tol,
            n_restarts=s.restarts,
            epsilon=s.epsilon,
            master_seed=self.seed if seed is None else seed,
            n_jobs=self.threads,
        )

    def grid(self, d: int) -> CandidateGrid:
        return CandidateGrid.build(self.selection.bmax, self.selection.gmax, d=d)

    def simulation_config(self, seed: int | None = None) -> SimulationConfig:
        s = self.simulation
        target = s.target_miscl if s.tau is None and s.target_miscl is not None else None
        if s.tau is None and target is None:
            target = DEFAULT_TARGET_MISCL
        try:
            return SimulationConfig(
                B=s.blocks,
                G=(s.components,) * s.blocks,
                block_size=s.block_size,
                n=s.n,
                noise=s.noise,
                tau=s.tau,
                target_miscl=target,
                seed=self.seed if seed is None else seed,
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e


def _deep_update(base: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Apply dotted-key overrides (`selection.bmax`) on a nested dict; None means unset."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    # A flag setting one side of an exclusive pair clears the file's other side.
    for mine, other in _EXCLUSIVE_KEYS + tuple((b, a) for a, b in _EXCLUSIVE_KEYS):
        if overrides.get(mine) is not None and overrides.get(other) is None:
            section, name = other.split(".")
            out.get(section, {}).pop(name, None)
    return out


def resolve_config_path(flag_value: str | Path | None) -> Path | None:
    if flag_value:
        return Path(flag_value)
    env = Settings().config_path
    return Path(env) if env else None


def load_run_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    raw: dict[str, Any] = {}
    cfg_path = resolve_config_path(path)
    if cfg_path is not None:
        try:
            raw = yaml.safe_load(cfg_path.read_text(encoding="utf-8")) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config file {cfg_path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {cfg_path} is not valid YAML: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {cfg_path} must hold a mapping")
    try:
        return RunConfig.model_validate(_deep_update(raw, overrides or {}))
    except ValidationError as e:
        raise ConfigError(str(e)) from e


CONFIG_TEMPLATE = """# blockmix run configuration.
# Command-line flags override anything set here.

seed: 1          # master seed: restarts, replicates and simulations derive from it
threads: 1       # parallel EM runs; results do not depend on it

# Columns to treat as categorical (integer level codes); optional inference
categorical: []
infer_categorical: false

binning:
  bins: null          # common R; null uses R = max(2, floor(n^(1/k)))
  bins_exponent: 4    # k

selection:
  bmax: 3
  gmax: 3
  restarts: 20
  max_iter: 500
  tol: 1.0e-7         # relative change of the penalized log-likelihood
  epsilon: null       # null uses 1 / (10 n R_max)

refinement:
  enabled: true
  max_iter: 200
  tol: 1.0e-8

simulation:
  blocks: 3
  components: 3
  block_size: 6
  n: 400
  noise: gaussian     # gaussian | student3 | laplace
  tau: null           # set either tau or target_miscl
  target_miscl: 0.05
"""

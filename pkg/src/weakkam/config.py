"""Run configuration: YAML file, schema, defaults and command-line overrides.

Every field below has a default, so an empty file (or no file) is a valid
config.  Each leaf field is also a command-line flag: top-level fields as
``--dt 0.005`` and section fields as ``--minimize.T 2``.  Flag values are
parsed as YAML, so lists and mappings work too
(``--minimize.start "[0.1, 0.6]"``, ``--potential "{kind: zero}"``).

Schema::

    n: 1                  # particles
    m: 256                # grid cells per circle
    dt: 0.01              # Lax-Oleinik step (seconds)
    tol: 1.0e-10          # value-iteration stop: spread of v - T v
    max_iters: 100000     # value-iteration sweeps
    seed: 0               # RNG seed for sampled checks and restarts
    potential:            # kind: zero | one_body | pairwise | sum
      kind: one_body
      function: {builtin: cosine, amplitude: 1.0, frequency: 1, phase: 0.0}
      # or function: {const: 0.0, cos: [a1, a2, ...], sin: [b1, b2, ...]}
      # sum: {kind: sum, parts: [<potential>, ...]}
    minimize:
      start: null         # config as a list of n reals, or a .json/.csv file
      end: null
      T: 1.0              # horizon (seconds)
      K: 32               # segments
      restarts: 4
      tol: 1.0e-8         # gradient norm
      max_iters: 2000
      oracle: false       # also run the grid dynamic program
      oracle_m: 32
      oracle_K: 8
    calibrate:
      solution: null      # directory written by ``solve``
      state: null         # config (list or file); default all particles at 0
      horizon: 10.0       # seconds, a multiple of the solution's dt
    verify:
      law_pairs: 1000     # value-function pairs per operator-law space
      law_m1: 64          # n=1 space for the operator laws
      law_m2: 16          # n=2 space for the operator laws
      matching_pairs: 500 # per particle count
      matching_max_n: 6
      path_m: [4, 8, 16]
      path_k: 4
      samples: 100        # domination curves
      horizon: 10.0       # calibration horizon
      shift: 0.37         # constant added to W for the shift check
      tonelli_instances: 10

The effective config (defaults filled in) is echoed into every output.
Runtime-only flags (``--out``, ``--threads``) are not part of it, since
outputs do not depend on them.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .potentials import Potential

Coords = Union[list[float], str, None]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MinimizeSection(_Section):
    start: Coords = None
    end: Coords = None
    T: float = Field(1.0, gt=0)
    K: int = Field(32, ge=1)
    restarts: int = Field(4, ge=1)
    tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(2000, ge=1)
    oracle: bool = False
    oracle_m: int = Field(32, ge=2)
    oracle_K: int = Field(8, ge=1)


class CalibrateSection(_Section):
    solution: str | None = None
    state: Coords = None
    horizon: float = Field(10.0, gt=0)


class VerifySection(_Section):
    law_pairs: int = Field(1000, ge=1)
    law_m1: int = Field(64, ge=2)
    law_m2: int = Field(16, ge=2)
    matching_pairs: int = Field(500, ge=1)
    matching_max_n: int = Field(6, ge=2, le=8)
    path_m: list[int] = Field(default_factory=lambda: [4, 8, 16])
    path_k: int = Field(4, ge=1, le=6)
    samples: int = Field(100, ge=1)
    horizon: float = Field(10.0, gt=0)
    shift: float = 0.37
    tonelli_instances: int = Field(10, ge=0)

    @field_validator("path_m")
    @classmethod
    def _small_grids(cls, v):
        if not v or any(m < 2 or m > 16 for m in v):
            raise ValueError("grid sizes must lie in [2, 16]")
        return v


class RunConfig(_Section):
    n: int = Field(1, ge=1)
    m: int = Field(256, ge=2)
    dt: float = Field(0.01, gt=0)
    tol: float = Field(1e-10, gt=0)
    max_iters: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    potential: dict[str, Any] = Field(
        default_factory=lambda: {"kind": "one_body", "function": {"builtin": "cosine", "amplitude": 1.0}}
    )
    minimize: MinimizeSection = Field(default_factory=MinimizeSection)
    calibrate: CalibrateSection = Field(default_factory=CalibrateSection)
    verify: VerifySection = Field(default_factory=VerifySection)

    @field_validator("potential")
    @classmethod
    def _potential(cls, v):
        Potential.from_dict(v)
        return v

    def build_potential(self) -> Potential:
        return Potential.from_dict(self.potential)

    def echo(self) -> dict:
        return self.model_dump(mode="json")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def validate(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        msg = first["msg"]
        # potential errors carry their own nested path
        if first["loc"][:1] == ("potential",) and msg.startswith("Value error, potential"):
            raise ConfigError(msg.removeprefix("Value error, ")) from None
        raise ConfigError(f"{_field_path(first)}: {msg}") from None


def load_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"--config: {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"--config: {path} must contain a mapping at the top level")
    return data


def leaf_fields(model: type[BaseModel] = RunConfig, prefix: str = "") -> list[str]:
    """Dotted names of every overridable field."""
    out = []
    for name, info in model.model_fields.items():
        ann = info.annotation
        if isinstance(ann, type) and issubclass(ann, BaseModel):
            out.extend(leaf_fields(ann, f"{prefix}{name}."))
        else:
            out.append(prefix + name)
    return out


def apply_overrides(data: dict, overrides: dict[str, str]) -> dict:
    """Set dotted fields from raw flag strings (parsed as YAML scalars/collections)."""
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for dotted, raw in overrides.items():
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"{dotted}: cannot parse {raw!r}") from None
        keys = dotted.split(".")
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{dotted}: parent is not a mapping")
        node[keys[-1]] = value
    return data


def defaults_yaml() -> str:
    return yaml.safe_dump(RunConfig().echo(), sort_keys=False)

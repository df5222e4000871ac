"""
SHADOWLAB Configuration
Validated experiment configuration: which system, which experiment, the
numeric parameters and where the artifacts go.

Enhanced with:
- pydantic v2 models with forbidden extras, so typos fail loudly
- Positivity validators on every numeric knob
- Stable config hash recorded in reports and the run ledger
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from shadowlab.core.errors import ConfigError
from shadowlab.core.structs import ExperimentKind

DEFAULT_OUTPUT_DIR = "shadowlab_out"
OUTPUT_DIR_ENV = "SHADOWLAB_OUTPUT_DIR"

# builders used when a config names no system
DEFAULT_BUILDERS = {
    ExperimentKind.SHADOW: "square",
    ExperimentKind.HYPER_SHADOW: "n-star",
    ExperimentKind.ANOSOV_REFUTE: "toral",
    ExperimentKind.DICHOTOMY: "toral",
    ExperimentKind.TRANSITIVITY: "toral",
    ExperimentKind.UNIVERSAL_DENDRITE: "universal-stage",
}


class SystemSpec(BaseModel):
    """A registered system builder and its keyword parameters."""
    model_config = ConfigDict(extra="forbid")

    builder: str
    params: Dict[str, Any] = Field(default_factory=dict)


class UniversalSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(3, ge=3)
    K: int = Field(2, ge=1)
    m: int = Field(8, ge=1)
    teeth: Optional[int] = Field(None, ge=1)


class RegionSpec(BaseModel):
    """Two open balls on the torus for the transitivity probe."""
    model_config = ConfigDict(extra="forbid")

    u_center: Tuple[float, float] = (0.1, 0.1)
    v_center: Tuple[float, float] = (0.7, 0.3)
    radius: float = Field(0.05, gt=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    epsilon: float
    system: Optional[SystemSpec] = None
    delta: Optional[float] = None
    delta_grid: List[float] = Field(default_factory=list)
    steps: int = Field(100, ge=1)
    trials: int = Field(100, ge=1)
    mesh: Optional[float] = None
    seed: int = Field(0, ge=0)
    generator: str = "uniform"
    window: Optional[int] = Field(None, ge=1)
    k_max: int = Field(25, ge=1)
    universal: UniversalSpec = Field(default_factory=UniversalSpec)
    regions: RegionSpec = Field(default_factory=RegionSpec)
    workers: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    render: bool = True
    ledger: bool = False

    @field_validator("epsilon", "delta", "mesh")
    @classmethod
    def _positive(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("delta_grid")
    @classmethod
    def _positive_grid(cls, v: List[float]) -> List[float]:
        if any(not d > 0 for d in v):
            raise ValueError("every δ must be positive")
        return sorted(v)

    @field_validator("generator")
    @classmethod
    def _known_generator(cls, v: str) -> str:
        if v not in ("uniform", "drift"):
            raise ValueError("generator is 'uniform' or 'drift'")
        return v

    @model_validator(mode="after")
    def _fill_system(self) -> "ExperimentConfig":
        if self.system is None:
            self.system = SystemSpec(builder=DEFAULT_BUILDERS[self.kind])
        if self.mesh is not None and self.mesh > self.epsilon / 2:
            raise ValueError("mesh must be at most ε/2")
        return self

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)

    def canonical(self) -> Dict[str, Any]:
        """The fields that determine the results (output placement excluded)."""
        return self.model_dump(mode="json", exclude={"output_dir", "ledger", "workers"})

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a config mapping; schema problems become ConfigError."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors = [
            {"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
            for err in e.errors()
        ]
        raise ConfigError("invalid experiment config", {"errors": errors})


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}", {"path": str(path)})
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object", {"path": str(path)})
    return data


def merge_config(*layers: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Later layers win; nested mappings merge key by key."""
    out: Dict[str, Any] = {}
    for layer in layers:
        for key, value in (layer or {}).items():
            if value is None:
                continue
            if isinstance(value, dict):
                base = out.get(key)
                out[key] = merge_config(base if isinstance(base, dict) else None, value)
            else:
                out[key] = value
    return out

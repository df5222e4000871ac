"""
SHADOWLAB Core Type Definitions
Enums and report dataclasses shared by every module.

Enhanced with:
- JSON-ready ``to_dict`` on every report
- Explicit error budgets carried next to each verdict
"""

from enum import Enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional

import numpy as np


# ─── Enums ────────────────────────────────────────────────

class SpaceKind(Enum):
    """Metric spaces the lab knows how to measure."""
    INTERVAL = "interval"
    STAR_UNION = "star-union"
    BRIDGE = "bridge"
    COMB_PRODUCT = "comb-product"
    TORUS = "torus"


class Verdict(Enum):
    """Outcome of a shadowing check."""
    SHADOWED = "shadowed"
    NOT_SHADOWED_IN_FAMILY = "not-shadowed-in-family"
    REFUTED = "refuted"


class HomeoVariant(Enum):
    """Interval homeomorphism families."""
    SQUARE = "square"
    THREE_FIXED = "three-fixed"
    PIECEWISE_LINEAR = "piecewise-linear"


class Orientation(Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"


class SegmentKind(Enum):
    """Which eigendirection a torus continuum follows."""
    STABLE = "stable"
    UNSTABLE = "unstable"


class ExperimentKind(Enum):
    """Experiments the harness can run."""
    SHADOW = "shadow"
    HYPER_SHADOW = "hyper-shadow"
    ANOSOV_REFUTE = "anosov-refute"
    UNIVERSAL_DENDRITE = "universal-dendrite"
    DICHOTOMY = "dichotomy"
    TRANSITIVITY = "transitivity"


# ─── Serialization ────────────────────────────────────────

def jsonable(obj: Any) -> Any:
    """Convert points, numpy scalars and nested reports into JSON-ready values."""
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return str(obj)


# ─── Reports ──────────────────────────────────────────────

@dataclass
class ShadowReport:
    """Verdict of a (continuum) shadowing check with its per-step distances."""
    verdict: Verdict
    epsilon: float
    delta: float
    n_steps: int
    method: str
    distances: List[float] = field(default_factory=list)
    witness: Any = None
    error_budget: Dict[str, float] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def shadowed(self) -> bool:
        return self.verdict is Verdict.SHADOWED

    @property
    def max_distance(self) -> float:
        return max(self.distances) if self.distances else 0.0

    def shadowed_at(self, epsilon: float) -> bool:
        """Whether the recorded distances already certify ε-shadowing."""
        return bool(self.distances) and self.max_distance < epsilon

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "n_steps": self.n_steps,
            "method": self.method,
            "max_distance": self.max_distance,
            "distances": list(self.distances),
            "witness": jsonable(self.witness),
            "error_budget": jsonable(self.error_budget),
            "details": jsonable(self.details),
        }


@dataclass
class VerificationReport:
    """Pass/fail summary of a sampled property check."""
    name: str
    passed: bool
    checked: int = 0
    failures: List[Dict[str, Any]] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def counterexample(self) -> Optional[Dict[str, Any]]:
        return self.failures[0] if self.failures else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "failures": jsonable(self.failures[:20]),
            "failure_count": len(self.failures),
            "details": jsonable(self.details),
        }

"""
SHADOWLAB Anosov Toral Automorphisms
Hyperbolic automorphisms of the 2-torus as the concrete transitive Anosov
system: local and global stable/unstable continua, the spliced pseudo-orbit
of the induced map on continua, family-level refutation of its shadowing,
and the diameter-dichotomy, transitivity and expansiveness probes.

Enhanced with:
- Exact rational arithmetic on rational points (Fraction in, Fraction out)
- Symbolic segments and parallelograms, sampled only when measured
- Closed-form diameter bounds that stay valid after wrapping
- Chunked candidate checks merged by candidate index
"""

import csv
import io
import logging
import math
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shadowlab.constructions import SYSTEM_BUILDERS, DynamicalSystem
from shadowlab.core.errors import ContractError, DomainError, InvariantViolation
from shadowlab.core.logging_config import log_summary
from shadowlab.core.metrics import metrics_manager
from shadowlab.core.structs import SegmentKind, ShadowReport, Verdict, VerificationReport, jsonable
from shadowlab.hyperspace import ContinuumPseudoOrbit, continuum_distance, induced_image
from shadowlab.metric import (
    FinitePointSet,
    Point,
    StructuralMap,
    TorusSpace,
    directed_torus_distance,
    torus_hausdorff,
    wrap_unit,
)

logger = logging.getLogger("shadowlab.anosov")

CAT_MATRIX = ((2, 1), (1, 1))
DEFAULT_POINT = (math.sqrt(2.0) - 1.0, math.sqrt(3.0) - 1.0)
MAX_TORUS_SAMPLES = 4_000_000
# a lifted segment this short is embedded isometrically in the torus
ISOMETRIC_LENGTH = 0.5
TORUS_DIAMETER = math.sqrt(2.0) / 2.0
LOCAL_SCALE = 0.25
DEFAULT_K_MAX = 25
WINDOW_MARGIN = 6
DENSITY_GRID = 0.01
STEP0_PROBES = 512
CANDIDATE_CHUNK = 500


def sampling_spacing(eps: float) -> float:
    """Sample spacing for torus continua at scale ε."""
    return min(1e-3, eps / 20.0)


@lru_cache(maxsize=512)
def _matrix_power(matrix: Tuple[Tuple[int, int], Tuple[int, int]], k: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    (a, b), (c, d) = matrix
    if k < 0:
        det = a * d - b * c
        return _matrix_power(((det * d, -det * b), (-det * c, det * a)), -k)
    out = ((1, 0), (0, 1))
    for _ in range(k):
        (p, q), (r, s) = out
        out = ((p * a + q * c, p * b + q * d), (r * a + s * c, r * b + s * d))
    return out


# ─── Automorphism ─────────────────────────────────────────

@dataclass(frozen=True)
class EigenData:
    """Expansion rates and unit eigendirections of a hyperbolic matrix."""
    lambda_u: float
    lambda_s: float
    root_u: float
    root_s: float
    v_u: Tuple[float, float]
    v_s: Tuple[float, float]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _eigenvector(matrix, root: float) -> Tuple[float, float]:
    (a, b), (c, d) = matrix
    if b != 0:
        v = (float(b), root - a)
    elif c != 0:
        v = (root - d, float(c))
    else:
        v = (1.0, 0.0) if abs(root - a) < abs(root - d) else (0.0, 1.0)
    n = math.hypot(*v)
    v = (v[0] / n, v[1] / n)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = (-v[0], -v[1])
    return v


class ToralAutomorphism(StructuralMap):
    """
    x ↦ M·x mod 1 for an integer matrix with det ±1.

    Rational (Fraction) points map exactly. Hyperbolicity is required unless
    ``require_hyperbolic`` is off, which admits non-expansive controls such
    as the identity.
    """

    def __init__(self, matrix=CAT_MATRIX, require_hyperbolic: bool = True, space: Optional[TorusSpace] = None):
        super().__init__(space or TorusSpace())
        try:
            rows = [[v for v in row] for row in matrix]
        except TypeError:
            raise DomainError("matrix must be 2×2", {"matrix": repr(matrix)})
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise DomainError("matrix must be 2×2", {"matrix": repr(matrix)})
        if any(float(v) != int(v) for r in rows for v in r):
            raise DomainError("matrix entries must be integers", {"matrix": repr(matrix)})
        self.matrix = tuple(tuple(int(v) for v in r) for r in rows)
        (a, b), (c, d) = self.matrix
        self.det = a * d - b * c
        self.trace = a + d
        if abs(self.det) != 1:
            raise DomainError("toral automorphisms need det ±1", {"det": self.det})
        if require_hyperbolic and not self.is_hyperbolic:
            raise DomainError("matrix has an eigenvalue on the unit circle", {"matrix": self.matrix})
        self._array = np.array(self.matrix, dtype=float)
        self._eigen: Optional[EigenData] = None

    @property
    def is_hyperbolic(self) -> bool:
        if self.det == 1:
            return abs(self.trace) > 2
        return self.trace != 0

    def characteristic_polynomial(self) -> Tuple[int, int, int]:
        """Coefficients of t² − tr·t + det."""
        return (1, -self.trace, self.det)

    def eigenvalue_product(self) -> int:
        """Product of the roots by Vieta: exactly det."""
        one, _, c0 = self.characteristic_polynomial()
        return c0 // one

    def eigen(self) -> EigenData:
        if self._eigen is None:
            if not self.is_hyperbolic:
                raise DomainError("eigen data needs a hyperbolic matrix", {"matrix": self.matrix})
            disc = math.sqrt(self.trace ** 2 - 4 * self.det)
            r1, r2 = (self.trace + disc) / 2.0, (self.trace - disc) / 2.0
            ru, rs = (r1, r2) if abs(r1) > abs(r2) else (r2, r1)
            if abs(abs(ru * rs) - abs(self.eigenvalue_product())) > 1e-9:
                raise InvariantViolation("eigenvalues do not multiply to det", {"roots": (ru, rs)})
            self._eigen = EigenData(
                abs(ru), abs(rs), ru, rs,
                _eigenvector(self.matrix, ru), _eigenvector(self.matrix, rs),
            )
        return self._eigen

    def power(self, k: int) -> np.ndarray:
        """M^k as a float array; negative k uses the integer inverse."""
        return np.array(_matrix_power(self.matrix, k), dtype=float)

    def __call__(self, p: Point) -> Point:
        (a, b), (c, d) = self.matrix
        x, y = p
        return self.space.canonical((a * x + b * y, c * x + d * y))

    def inverse(self, p: Point) -> Point:
        (a, b), (c, d) = self.matrix
        s = self.det
        x, y = p
        return self.space.canonical((s * (d * x - b * y), s * (a * y - c * x)))

    def apply_array(self, P: np.ndarray) -> np.ndarray:
        return wrap_unit(np.asarray(P, dtype=float).reshape(-1, 2) @ self._array.T)

    def inverse_array(self, P: np.ndarray) -> np.ndarray:
        return wrap_unit(np.asarray(P, dtype=float).reshape(-1, 2) @ self.power(-1).T)

    def apply_vector(self, w: Sequence[float], k: int = 1) -> np.ndarray:
        """Linear action on a displacement (no reduction mod 1)."""
        return self.power(k) @ np.asarray(w, dtype=float)

    def lipschitz_bound(self) -> float:
        return float(np.linalg.norm(self._array, 2))

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"map": "toral", "matrix": [list(r) for r in self.matrix], "det": self.det}
        if self.is_hyperbolic:
            out["eigen"] = self.eigen().to_dict()
        return out


def toral_system(matrix=CAT_MATRIX, require_hyperbolic: bool = True) -> DynamicalSystem:
    T = ToralAutomorphism(matrix, require_hyperbolic=require_hyperbolic)
    return DynamicalSystem(T.space, T, name="toral", description={"builder": "toral", "params": {"matrix": matrix}})


def torus_identity_system() -> DynamicalSystem:
    return toral_system(((1, 0), (0, 1)), require_hyperbolic=False)


def apply_toral(T: ToralAutomorphism, p: Point) -> Point:
    return T(p)


def _toral(system: DynamicalSystem) -> ToralAutomorphism:
    if not isinstance(system.map, ToralAutomorphism):
        raise DomainError("torus continua need a toral automorphism", {"system": system.name})
    return system.map


def _exact_point(p: Point) -> Point:
    return (Fraction(p[0]) % 1, Fraction(p[1]) % 1)


# ─── Torus continua ───────────────────────────────────────

class TorusContinuum(ABC):
    """A symbolic continuum on the torus, sampled on demand."""

    @abstractmethod
    def sample(self, spacing: float) -> np.ndarray:
        """Points of the continuum, no point of it farther than ``slack(spacing)`` from a sample."""

    @abstractmethod
    def slack(self, spacing: float) -> float:
        ...

    @abstractmethod
    def edge_vectors(self) -> List[np.ndarray]:
        """Lifted vectors of segments contained in the continuum."""

    @abstractmethod
    def image(self, T: ToralAutomorphism) -> "TorusContinuum":
        ...

    @abstractmethod
    def preimage(self, T: ToralAutomorphism) -> "TorusContinuum":
        ...

    @abstractmethod
    def diameter_bounds(self) -> Tuple[float, float]:
        """(lower, upper) bounds for the torus diameter."""

    def push(self, T: ToralAutomorphism, k: int) -> "TorusContinuum":
        out = self
        for _ in range(abs(k)):
            out = out.image(T) if k > 0 else out.preimage(T)
        return out


def _check_points(n: int) -> None:
    if n > MAX_TORUS_SAMPLES:
        raise ContractError("continuum too long to sample", {"samples": n, "cap": MAX_TORUS_SAMPLES})


def _base_array(base: Point) -> np.ndarray:
    return np.array([float(base[0]), float(base[1])])


@dataclass(frozen=True)
class TorusSegment(TorusContinuum):
    """base + t·direction for t ∈ [0, length], wrapped; length 0 is the singleton {base}."""
    base: Point
    direction: Tuple[float, float]
    length: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length >= 0.0):
            raise DomainError("segment length must be a finite nonnegative real", {"length": self.length})
        if abs(math.hypot(*self.direction) - 1.0) > 1e-9:
            raise DomainError("segment direction must be a unit vector", {"direction": self.direction})

    @property
    def is_point(self) -> bool:
        return self.length == 0.0

    def point_at(self, t: float) -> Point:
        b = _base_array(self.base) + t * np.asarray(self.direction)
        return tuple(wrap_unit(b.reshape(1, 2))[0])

    def sample(self, spacing: float) -> np.ndarray:
        n = max(1, math.ceil(self.length / spacing - 1e-12)) if self.length > 0 else 0
        _check_points(n + 1)
        t = np.linspace(0.0, self.length, n + 1)
        return wrap_unit(_base_array(self.base) + t[:, None] * np.asarray(self.direction))

    def slack(self, spacing: float) -> float:
        return 0.0 if self.is_point else spacing / 2.0

    def edge_vectors(self) -> List[np.ndarray]:
        return [] if self.is_point else [self.length * np.asarray(self.direction)]

    def _moved(self, base: Point, w: np.ndarray) -> "TorusSegment":
        n = float(np.hypot(*w))
        if n == 0.0:
            return TorusSegment(base, self.direction, 0.0)
        return TorusSegment(base, (float(w[0] / n), float(w[1] / n)), n)

    def image(self, T: ToralAutomorphism) -> "TorusSegment":
        return self._moved(T(self.base), T.apply_vector(self.direction, 1) * self.length)

    def preimage(self, T: ToralAutomorphism) -> "TorusSegment":
        return self._moved(T.inverse(self.base), T.apply_vector(self.direction, -1) * self.length)

    def diameter_bounds(self) -> Tuple[float, float]:
        # sub-segments up to length 1/2 are isometric, so min(L, 1/2) is attained
        return min(self.length, ISOMETRIC_LENGTH), min(self.length, TORUS_DIAMETER)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "segment", "base": jsonable(self.base), "direction": list(self.direction), "length": self.length}


@dataclass(frozen=True)
class TorusParallelogram(TorusContinuum):
    """Filled parallelogram base + s·u + r·v, s, r ∈ [0, 1]."""
    base: Point
    u: Tuple[float, float]
    v: Tuple[float, float]

    @classmethod
    def square(cls, base: Point, side: float) -> "TorusParallelogram":
        if not side > 0:
            raise DomainError("square side must be positive", {"side": side})
        return cls(base, (side, 0.0), (0.0, side))

    def sample(self, spacing: float) -> np.ndarray:
        nu = max(1, math.ceil(math.hypot(*self.u) / spacing - 1e-12))
        nv = max(1, math.ceil(math.hypot(*self.v) / spacing - 1e-12))
        _check_points((nu + 1) * (nv + 1))
        s, r = np.meshgrid(np.linspace(0.0, 1.0, nu + 1), np.linspace(0.0, 1.0, nv + 1), indexing="ij")
        pts = _base_array(self.base) + s.reshape(-1, 1) * np.asarray(self.u) + r.reshape(-1, 1) * np.asarray(self.v)
        return wrap_unit(pts)

    def slack(self, spacing: float) -> float:
        return spacing

    def edge_vectors(self) -> List[np.ndarray]:
        return [np.asarray(self.u), np.asarray(self.v)]

    def image(self, T: ToralAutomorphism) -> "TorusParallelogram":
        return TorusParallelogram(T(self.base), tuple(T.apply_vector(self.u)), tuple(T.apply_vector(self.v)))

    def preimage(self, T: ToralAutomorphism) -> "TorusParallelogram":
        return TorusParallelogram(T.inverse(self.base), tuple(T.apply_vector(self.u, -1)), tuple(T.apply_vector(self.v, -1)))

    def diameter_bounds(self) -> Tuple[float, float]:
        u, v = np.asarray(self.u), np.asarray(self.v)
        lifted = max(np.hypot(*(u + v)), np.hypot(*(u - v)))
        side = max(np.hypot(*u), np.hypot(*v))
        return float(min(side, ISOMETRIC_LENGTH)), float(min(lifted, TORUS_DIAMETER))

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "parallelogram", "base": jsonable(self.base), "u": list(self.u), "v": list(self.v)}


@induced_image.register
def _(K: TorusContinuum, system: DynamicalSystem) -> TorusContinuum:
    return K.image(_toral(system))


@continuum_distance.register
def _(A: TorusContinuum, B: TorusContinuum, system: DynamicalSystem, spacing: float) -> float:
    return torus_hausdorff(A.sample(spacing), B.sample(spacing))


# ─── Stable and unstable continua ─────────────────────────

def _centered_segment(x: Point, direction: Tuple[float, float], length: float) -> TorusSegment:
    bx = float(x[0]) - 0.5 * length * direction[0]
    by = float(x[1]) - 0.5 * length * direction[1]
    return TorusSegment(_exact_point((bx, by)), direction, length)


def _local_continuum(T: ToralAutomorphism, x: Point, eps: float, kind: SegmentKind) -> TorusSegment:
    if not 0.0 <= eps < LOCAL_SCALE:
        raise ContractError("local continua need 0 ≤ ε < 1/4", {"eps": eps})
    e = T.eigen()
    return _centered_segment(T.space.canonical(x), e.v_s if kind is SegmentKind.STABLE else e.v_u, eps)


def local_stable_continuum(T: ToralAutomorphism, x: Point, eps: float) -> TorusSegment:
    """Stable segment of diameter ε centred at x; forward images shrink by λ_s."""
    return _local_continuum(T, x, eps, SegmentKind.STABLE)


def local_unstable_continuum(T: ToralAutomorphism, x: Point, eps: float) -> TorusSegment:
    return _local_continuum(T, x, eps, SegmentKind.UNSTABLE)


@dataclass
class GlobalContinuum:
    """S_n (stable) or U_n (unstable) through x: a segment of length ε·λ_u^{k_n}."""
    x: Point
    k_n: int
    epsilon: float
    kind: SegmentKind
    segment: TorusSegment
    spacing: float
    density_radius: Optional[float] = None

    @property
    def length(self) -> float:
        return self.segment.length

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": jsonable(self.x),
            "k_n": self.k_n,
            "epsilon": self.epsilon,
            "kind": self.kind.value,
            "segment": self.segment.to_dict(),
            "spacing": self.spacing,
            "density_radius": self.density_radius,
        }


def torus_grid(spacing: float) -> np.ndarray:
    k = max(1, math.ceil(1.0 / spacing))
    g = (np.arange(k) + 0.5) / k
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def density_radius(K: TorusContinuum, spacing: float, grid: float = DENSITY_GRID) -> float:
    """Largest distance from a grid point to K, sampling slack included."""
    d = directed_torus_distance(torus_grid(grid), K.sample(spacing))
    return float(d.max()) + K.slack(spacing)


def build_global_continuum(
    T: ToralAutomorphism,
    x: Point,
    k_n: int,
    eps: float,
    kind: SegmentKind = SegmentKind.STABLE,
    spacing: Optional[float] = None,
    measure_density: bool = True,
) -> GlobalContinuum:
    """
    ⋃_{i ≤ k_n} f^{−i}(C^s_ε(f^i x)) for the stable kind, and symmetrically for
    the unstable kind. For a linear map this is one segment of length
    ε·λ_u^{k_n} through x.
    """
    if k_n < 0:
        raise DomainError("k_n must be nonnegative", {"k_n": k_n})
    if not 0.0 < eps < LOCAL_SCALE:
        raise ContractError("global continua need 0 < ε < 1/4", {"eps": eps})
    spacing = spacing or sampling_spacing(eps)
    e = T.eigen()
    x = T.space.canonical(x)
    direction = e.v_s if kind is SegmentKind.STABLE else e.v_u
    seg = _centered_segment(x, direction, eps * e.lambda_u ** k_n)
    out = GlobalContinuum(x, k_n, eps, kind, seg, spacing)
    if measure_density:
        out.density_radius = density_radius(seg, spacing)
    return out


@dataclass
class SplicePair:
    stable: GlobalContinuum
    unstable: GlobalContinuum
    k_n: int
    distance: float
    spacing: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k_n": self.k_n,
            "hausdorff": self.distance,
            "certified_bound": self.distance + self.spacing,
            "stable": self.stable.to_dict(),
            "unstable": self.unstable.to_dict(),
        }


def find_splice_pair(
    T: ToralAutomorphism,
    eps: float,
    delta: float,
    x: Point = DEFAULT_POINT,
    y: Optional[Point] = None,
    k_max: int = DEFAULT_K_MAX,
    spacing: Optional[float] = None,
) -> SplicePair:
    """
    Grow k_n until the measured d_H(S_n, U_n) plus the sampling error is below δ.
    """
    spacing = spacing or sampling_spacing(eps)
    y = x if y is None else y
    for k in range(1, k_max + 1):
        S = build_global_continuum(T, x, k, eps, SegmentKind.STABLE, spacing, measure_density=False)
        U = build_global_continuum(T, y, k, eps, SegmentKind.UNSTABLE, spacing, measure_density=False)
        d = torus_hausdorff(S.segment.sample(spacing), U.segment.sample(spacing))
        logger.debug(f"k_n={k} length={S.length:.3f} d_H={d:.5f}")
        if d + spacing < delta:
            S.density_radius = density_radius(S.segment, spacing)
            U.density_radius = density_radius(U.segment, spacing)
            return SplicePair(S, U, k, d, spacing)
    raise ContractError("no k_n ≤ k_max brings S_n and U_n within δ", {"k_max": k_max, "delta": delta, "eps": eps})


# ─── Spliced pseudo-orbit ─────────────────────────────────

@dataclass
class SplicedOrbit:
    """K_{−N} … K_N: images of U before the jump at 0, images of S from 0 on."""
    cpo: ContinuumPseudoOrbit
    origin: int
    pair: SplicePair

    @property
    def window(self) -> int:
        return self.origin

    @property
    def k_n(self) -> int:
        return self.pair.k_n

    @property
    def jump(self) -> float:
        return self.cpo.jumps[self.origin - 1]

    def at(self, k: int) -> TorusSegment:
        return self.cpo.continua[k + self.origin]

    def lengths(self) -> Dict[int, float]:
        return {k: self.at(k).length for k in range(-self.origin, self.origin + 1)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window": self.window,
            "k_n": self.k_n,
            "delta": self.cpo.delta,
            "jump": self.jump,
            "jumps": list(self.cpo.jumps),
            "pair": self.pair.to_dict(),
            "lengths": {str(k): v for k, v in self.lengths().items()},
        }


def splice_pseudo_orbit(
    system: DynamicalSystem,
    pair: SplicePair,
    delta: float,
    window: Optional[int] = None,
) -> SplicedOrbit:
    """
    Two-sided continuum pseudo-orbit following U backward and S forward. The
    backward half is built by pulling U back N times and pushing forward
    again, so every jump except the one into K_0 is an exact image.
    """
    T = _toral(system)
    S, U = pair.stable.segment, pair.unstable.segment
    measured = continuum_distance(S, U, system, pair.spacing)
    if measured >= delta:
        raise ContractError("d_H(S, U) is not below δ", {"measured": measured, "delta": delta})
    N = window if window is not None else pair.k_n + WINDOW_MARGIN
    if N < 1:
        raise DomainError("window must be at least 1", {"window": N})
    back = [U.push(T, -N)]
    for _ in range(N - 1):
        back.append(back[-1].image(T))
    forward = [S]
    for _ in range(N):
        forward.append(forward[-1].image(T))
    cpo = ContinuumPseudoOrbit(tuple(back + forward), delta, system, pair.spacing)
    nonzero = [i for i, j in enumerate(cpo.jumps) if j > 0.0]
    if nonzero != [N - 1]:
        raise InvariantViolation("spliced orbit must jump only into K_0", {"nonzero": nonzero})
    metrics_manager.record_pseudo_orbit("spliced")
    return SplicedOrbit(cpo, N, pair)


# ─── Family refutation ────────────────────────────────────

def default_family(T: ToralAutomorphism) -> List[TorusContinuum]:
    """
    10⁴ candidates: 400 grid singletons, 7200 segments (100 bases × 12
    directions × 6 lengths) and 2400 filled squares (240 bases × 10 sides).
    Directions include both eigendirections.
    """
    e = T.eigen()
    family: List[TorusContinuum] = []
    for i in range(20):
        for j in range(20):
            family.append(TorusSegment(((i + 0.5) / 20, (j + 0.5) / 20), (1.0, 0.0), 0.0))
    directions = [e.v_s, e.v_u] + [(math.cos(a), math.sin(a)) for a in np.pi * (np.arange(10) + 0.5) / 10]
    lengths = (0.002, 0.01, 0.05, 0.1, 0.2, 0.4)
    for i in range(10):
        for j in range(10):
            base = ((i + 0.25) / 10, (j + 0.25) / 10)
            for dvec in directions:
                for L in lengths:
                    family.append(TorusSegment(base, dvec, L))
    sides = (0.005, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.15, 0.2, 0.25)
    for i in range(16):
        for j in range(15):
            base = ((i + 0.1) / 16, (j + 0.1) / 15)
            for s in sides:
                family.append(TorusParallelogram.square(base, s))
    return family


def _candidate_kind(C: TorusContinuum) -> str:
    if isinstance(C, TorusSegment):
        return "singleton" if C.is_point else "segment"
    return "square"


@dataclass
class CandidateRow:
    index: int
    kind: str
    base_x: float
    base_y: float
    size: float
    step0_lower_bound: float
    step0_fails: bool
    forward_ok: bool
    backward_ok: bool
    size_ok: bool
    outcome: str

    @property
    def violates_necessary(self) -> bool:
        return not (self.forward_ok and self.backward_ok and self.size_ok)


CSV_COLUMNS = [
    "index", "kind", "base_x", "base_y", "size", "step0_lower_bound", "step0_fails",
    "forward_ok", "backward_ok", "size_ok", "violates_necessary", "outcome",
]


@dataclass
class RefutationResult:
    report: ShadowReport
    rows: List[CandidateRow] = field(default_factory=list)
    orbit: Optional[SplicedOrbit] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([
                r.index, r.kind, repr(r.base_x), repr(r.base_y), repr(r.size), repr(r.step0_lower_bound),
                int(r.step0_fails), int(r.forward_ok), int(r.backward_ok), int(r.size_ok),
                int(r.violates_necessary), r.outcome,
            ])
        return buf.getvalue()


class _Assessor:
    """Shared per-orbit data for checking candidates against the necessary conditions."""

    def __init__(self, T: ToralAutomorphism, orbit: SplicedOrbit, eps: float, spacing: float, probes: int):
        self.T = T
        self.orbit = orbit
        self.eps = eps
        self.spacing = spacing
        self.candidate_spacing = eps / 10.0
        N, k0 = orbit.window, orbit.k_n
        self.ks = np.arange(k0, N + 1)
        self.forward_powers = np.stack([T.power(int(k)) for k in self.ks]) if self.ks.size else np.zeros((0, 2, 2))
        self.backward_powers = np.stack([T.power(-int(k)) for k in self.ks]) if self.ks.size else np.zeros((0, 2, 2))
        self.forward_limit = np.array([2 * eps + orbit.at(int(k)).diameter_bounds()[1] for k in self.ks])
        self.backward_limit = np.array([2 * eps + orbit.at(-int(k)).diameter_bounds()[1] for k in self.ks])
        S = orbit.at(0)
        self.s_lower = S.diameter_bounds()[0]
        t = np.linspace(0.0, S.length, probes)
        self.probes = wrap_unit(_base_array(S.base) + t[:, None] * np.asarray(S.direction))

    def _expands_beyond(self, C: TorusContinuum, powers: np.ndarray, limit: np.ndarray) -> bool:
        edges = C.edge_vectors()
        if not edges or not powers.size:
            return False
        E = np.stack(edges)
        lengths = np.linalg.norm(np.einsum("kij,ej->kei", powers, E), axis=2).max(axis=1)
        return bool((np.minimum(lengths, ISOMETRIC_LENGTH) > limit).any())

    def assess(self, index: int, C: TorusContinuum) -> CandidateRow:
        h = self.candidate_spacing
        d = directed_torus_distance(self.probes, C.sample(h))
        bound = float(d.max()) - C.slack(h) - 1e-9
        lo, hi = C.diameter_bounds()
        forward_ok = not self._expands_beyond(C, self.forward_powers, self.forward_limit)
        backward_ok = not self._expands_beyond(C, self.backward_powers, self.backward_limit)
        size_ok = hi >= self.s_lower - 2 * self.eps
        step0_fails = bound > self.eps
        failed = step0_fails or not (forward_ok and backward_ok and size_ok)
        return CandidateRow(
            index, _candidate_kind(C), float(C.base[0]), float(C.base[1]), hi, bound,
            step0_fails, forward_ok, backward_ok, size_ok, "fails" if failed else "unresolved",
        )

    def window_check(self, C: TorusContinuum) -> str:
        """Sampled d_H(f^k C, K_k) over the whole window: shadows, fails or undecided."""
        slack = self.spacing + C.slack(self.spacing)
        worst = 0.0
        try:
            for k in range(-self.orbit.window, self.orbit.window + 1):
                K = self.orbit.at(k)
                d = torus_hausdorff(C.push(self.T, k).sample(self.spacing), K.sample(self.spacing))
                if d - slack >= self.eps:
                    return "fails"
                worst = max(worst, d)
        except ContractError:
            return "undecided"
        return "shadows" if worst + slack < self.eps else "undecided"


def refute_shadowing(
    system: DynamicalSystem,
    orbit: SplicedOrbit,
    eps: float,
    family: Optional[Sequence[TorusContinuum]] = None,
    probes: int = STEP0_PROBES,
    workers: int = 1,
) -> RefutationResult:
    """
    Check every family member against the spliced orbit.

    A candidate fails when some probe point of S = K_0 lies farther than ε
    from it. Independently, a continuum that ε-shadows must keep
    diam(f^k C) ≤ 2ε + diam(K_k) and diam(f^{−k} C) ≤ 2ε + diam(K_{−k}) for
    k_n ≤ k ≤ N, and must have diam(C) ≥ diam(S) − 2ε. "refuted" means every
    candidate fails and every candidate violates one of those conditions. It
    is a statement about the family only.
    """
    started = time.perf_counter()
    T = _toral(system)
    family = list(family) if family is not None else default_family(T)
    spacing = orbit.pair.spacing
    assessor = _Assessor(T, orbit, eps, spacing, probes)

    chunks = [list(range(i, min(i + CANDIDATE_CHUNK, len(family)))) for i in range(0, len(family), CANDIDATE_CHUNK)]

    def run(chunk: List[int]) -> List[CandidateRow]:
        return [assessor.assess(i, family[i]) for i in chunk]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(run, chunks))
    else:
        batches = [run(c) for c in chunks]
    rows = [r for batch in batches for r in batch]

    witness = None
    for r in rows:
        if r.outcome == "unresolved":
            r.outcome = assessor.window_check(family[r.index])
            if r.outcome == "shadows" and witness is None:
                witness = r.index

    failed = sum(r.outcome == "fails" for r in rows)
    necessary = sum(r.violates_necessary for r in rows)
    if witness is not None:
        verdict = Verdict.SHADOWED
    elif failed == len(rows) and necessary == len(rows):
        verdict = Verdict.REFUTED
    else:
        verdict = Verdict.NOT_SHADOWED_IN_FAMILY
    if verdict is Verdict.SHADOWED:
        logger.warning(f"candidate {witness} shadows the spliced orbit within sampling error")

    report = ShadowReport(
        verdict, eps, orbit.cpo.delta, orbit.cpo.n_steps, "family-refutation",
        witness=None if witness is None else family[witness].to_dict(),
        error_budget={
            "spacing": spacing,
            "candidate_spacing": assessor.candidate_spacing,
            "splice_bound": orbit.pair.distance + spacing,
        },
        details={
            "candidates": len(rows),
            "failed": failed,
            "step0_certified": sum(r.step0_fails for r in rows),
            "forward_violations": sum(not r.forward_ok for r in rows),
            "backward_violations": sum(not r.backward_ok for r in rows),
            "size_violations": sum(not r.size_ok for r in rows),
            "necessary_violations": necessary,
            "undecided": sum(r.outcome == "undecided" for r in rows),
            "shadowing_candidates": sum(r.outcome == "shadows" for r in rows),
            "k_n": orbit.k_n,
            "window": orbit.window,
        },
    )
    elapsed = time.perf_counter() - started
    metrics_manager.record_shadow_check("family-refutation", verdict.value)
    metrics_manager.record_candidates(r.outcome for r in rows)
    metrics_manager.record_experiment_latency("anosov-refute", elapsed)
    log_summary(logger, f"Refutation over {len(rows)} candidates: {verdict.value}",
                verdict=verdict.value, k_n=orbit.k_n, elapsed=round(elapsed, 3))
    return RefutationResult(report, rows, orbit)


# ─── Probes ───────────────────────────────────────────────

def diameter_dichotomy_probe(
    T: ToralAutomorphism,
    C: TorusContinuum,
    delta: float,
    eps: float,
    N: int,
) -> VerificationReport:
    """
    Once some f^k C has diameter > ε, every later f^n C (n ≤ N) keeps
    diameter ≥ δ. Diameters come from the closed-form bounds.
    """
    lo0, hi0 = C.diameter_bounds()
    if hi0 > delta:
        raise ContractError("probe needs diam(C) ≤ δ", {"diameter": hi0, "delta": delta})
    first_exceed: Optional[int] = None
    failures: List[Dict[str, Any]] = []
    lowers: List[float] = []
    K = C
    for n in range(N + 1):
        lo, hi = K.diameter_bounds()
        lowers.append(lo)
        if first_exceed is None and lo > eps:
            first_exceed = n
        elif first_exceed is not None and hi < delta:
            failures.append({"n": n, "diameter": hi})
        K = K.image(T)
    return VerificationReport(
        "diameter-dichotomy", not failures, N + 1, failures,
        details={"first_exceed": first_exceed, "vacuous": first_exceed is None, "lower_diameters": lowers},
    )


def random_segments(rng: np.random.Generator, count: int, max_length: float) -> List[TorusSegment]:
    out = []
    for _ in range(count):
        a = float(rng.uniform(0.0, math.pi))
        base = (float(rng.uniform()), float(rng.uniform()))
        out.append(TorusSegment(base, (math.cos(a), math.sin(a)), float(rng.uniform(0.0, max_length))))
    return out


def dichotomy_sweep(
    T: ToralAutomorphism,
    count: int = 1000,
    delta: float = 0.01,
    eps: float = 0.1,
    N: int = 40,
    seed: int = 0,
) -> VerificationReport:
    """Run the dichotomy probe on ``count`` random segments of diameter ≤ δ."""
    rng = np.random.default_rng(seed)
    failures: List[Dict[str, Any]] = []
    exceeded = 0
    for i, C in enumerate(random_segments(rng, count, delta)):
        r = diameter_dichotomy_probe(T, C, delta, eps, N)
        exceeded += r.details["first_exceed"] is not None
        failures.extend({"segment": i, **f} for f in r.failures)
    return VerificationReport(
        "diameter-dichotomy-sweep", not failures, count, failures,
        details={"delta": delta, "eps": eps, "N": N, "seed": seed, "exceeded": exceeded},
    )


@dataclass(frozen=True)
class TorusBall:
    center: Point
    radius: float

    def grid(self, per_radius: int = 20) -> np.ndarray:
        h = self.radius / per_radius
        i = np.arange(-per_radius, per_radius + 1) * h
        gx, gy = np.meshgrid(i, i, indexing="ij")
        D = np.column_stack([gx.ravel(), gy.ravel()])
        D = D[np.hypot(D[:, 0], D[:, 1]) < self.radius]
        return wrap_unit(_base_array(self.center) + D)


@dataclass
class TransitivityResult:
    n: Optional[int]
    n_positive: Optional[int]
    samples: int
    max_n: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def transitivity_probe(T: ToralAutomorphism, U: TorusBall, V: TorusBall, max_n: int, per_radius: int = 20) -> TransitivityResult:
    """Least n ≤ max_n with a grid point of U landing in V, and the least such n ≥ 1."""
    P = U.grid(per_radius)
    samples = len(P)
    target = _base_array(V.center).reshape(1, 2)
    first = first_positive = None
    for n in range(max_n + 1):
        if n:
            P = T.apply_array(P)
        if (directed_torus_distance(P, target) < V.radius).any():
            if first is None:
                first = n
            if n >= 1:
                first_positive = n
                break
    return TransitivityResult(first, first_positive, samples, max_n)


def _wrap_centered(D: np.ndarray) -> np.ndarray:
    return D - np.round(D)


def dynamical_ball(T: ToralAutomorphism, x: Point, c: float, N: int, grid: Optional[float] = None) -> FinitePointSet:
    """
    Points y of a local grid around x with d(f^k y, f^k x) ≤ c for |k| ≤ N.
    Displacements evolve linearly, so M^k (y − x) is wrapped instead of
    iterating y and x separately.
    """
    if not 0.0 < c < LOCAL_SCALE:
        raise ContractError("dynamical balls need 0 < c < 1/4", {"c": c})
    h = grid or c / 25.0
    r = int(math.floor(c / h + 1e-9))
    i = np.arange(-r, r + 1) * h
    gx, gy = np.meshgrid(i, i, indexing="ij")
    D = np.column_stack([gx.ravel(), gy.ravel()])
    keep = np.hypot(D[:, 0], D[:, 1]) <= c
    for k in range(1, N + 1):
        for sign in (1, -1):
            Dk = _wrap_centered(D @ T.power(sign * k).T)
            keep &= np.hypot(Dk[:, 0], Dk[:, 1]) <= c
    x = T.space.canonical(x)
    pts = wrap_unit(_base_array(x) + D[keep])
    return FinitePointSet(T.space, tuple((float(p[0]), float(p[1])) for p in pts), float(h))


def local_product_point(T: ToralAutomorphism, x: Point, y: Point, c: float) -> Optional[Point]:
    """
    The point where the local unstable segment of x (half-length c) meets the
    local stable segment of y, if they meet.
    """
    e = T.eigen()
    A = np.column_stack([e.v_u, -np.asarray(e.v_s)])
    d = _wrap_centered(_base_array(y) - _base_array(x))
    best: Optional[Tuple[float, float]] = None
    for n1 in (-1, 0, 1):
        for n2 in (-1, 0, 1):
            s, t = np.linalg.solve(A, d + np.array([n1, n2]))
            if abs(s) <= c and abs(t) <= c and (best is None or max(abs(s), abs(t)) < max(map(abs, best))):
                best = (float(s), float(t))
    if best is None:
        return None
    p = _base_array(x) + best[0] * np.asarray(e.v_u)
    q = wrap_unit(p.reshape(1, 2))[0]
    return (float(q[0]), float(q[1]))


def cell_image_area(T: ToralAutomorphism, corner: Point, h: float) -> float:
    """Area of the lifted image of the grid cell [corner, corner + h]²."""
    c = _base_array(corner)
    quad = np.array([c, c + (h, 0.0), c + (h, h), c + (0.0, h)]) @ T.power(1).T
    x, y = quad[:, 0], quad[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


SYSTEM_BUILDERS["toral"] = toral_system
SYSTEM_BUILDERS["torus-identity"] = torus_identity_system

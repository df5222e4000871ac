"""
SHADOWLAB Metric Spaces
Uniform distance, diameter, ε-net and Hausdorff machinery over every space
the lab builds: intervals, star unions, bridge spaces, combs and the torus.

Enhanced with:
- Vectorized pairwise distance matrices per space kind
- Periodic KD-tree Hausdorff queries on the torus
- Segment/carrier geometry consumed by the dendrite complex builder
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any, Dict, Hashable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from shadowlab.core.errors import ContractError, DomainError
from shadowlab.core.structs import SpaceKind

logger = logging.getLogger("shadowlab.metric")

Point = Any
SegmentKey = Tuple[Hashable, ...]

# Row block used when a full distance matrix would be too large
CHUNK_ROWS = 1024


# ─── Geometry records ─────────────────────────────────────

@dataclass(frozen=True)
class Segment:
    """An arc of a dendrite-like space, parameterized by s ∈ [0, 1]."""
    key: SegmentKey
    length: float


class ToothIndex(Protocol):
    """Enumerated countable subset D of a base space carrying comb teeth."""

    def point(self, key: Hashable) -> Point: ...

    def index(self, key: Hashable) -> int: ...

    def is_member(self, key: Hashable) -> bool: ...

    def window_keys(self) -> Sequence[Hashable]: ...


# ─── Spaces ───────────────────────────────────────────────

class SpaceHandle(ABC):
    """
    A compact metric space with a canonical point representation.

    Dendrite-like spaces also expose a decomposition into arcs
    (``segments``) so a finite metric tree can be built from them.
    """

    kind: SpaceKind

    @abstractmethod
    def canonical(self, p: Point) -> Point:
        """Return the canonical form of ``p`` or raise DomainError."""

    @abstractmethod
    def _distance(self, a: Point, b: Point) -> float:
        """Distance between canonical points."""

    def contains(self, p: Point) -> bool:
        try:
            self.canonical(p)
        except DomainError:
            return False
        return True

    def distance(self, a: Point, b: Point) -> float:
        return self._distance(self.canonical(a), self.canonical(b))

    def pairwise(self, A: Sequence[Point], B: Sequence[Point]) -> np.ndarray:
        """Distance matrix between two point lists (canonical points expected)."""
        out = np.empty((len(A), len(B)))
        for i, a in enumerate(A):
            for j, b in enumerate(B):
                out[i, j] = self._distance(a, b)
        return out

    # Arc geometry, dendrite-like spaces only

    def segments(self) -> List[Segment]:
        raise DomainError(f"{self.kind.value} space has no arc decomposition")

    def point_on(self, key: SegmentKey, s: float) -> Point:
        raise DomainError(f"{self.kind.value} space has no arc decomposition")

    def carrier(self, p: Point) -> Tuple[SegmentKey, float]:
        raise DomainError(f"{self.kind.value} space has no arc decomposition")

    def arc_length(self, key: SegmentKey) -> float:
        """Length of the arc ``key``, materialized or not."""
        for seg in self.segments():
            if seg.key == key:
                return seg.length
        raise DomainError("unknown arc", {"key": repr(key)})

    def required_marks(self) -> List[Point]:
        """Points that must be vertices of any complex built on this space."""
        return []

    def retract(self, p: Point) -> Point:
        """Nearest-structure retraction onto the materialized part (identity by default)."""
        return p

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind.value}


class IntervalSpace(SpaceHandle):
    """Closed interval [lo, hi] with the usual metric."""

    kind = SpaceKind.INTERVAL

    def __init__(self, lo: float = 0.0, hi: float = 1.0):
        if not hi > lo:
            raise DomainError("interval needs lo < hi", {"lo": lo, "hi": hi})
        self.lo = float(lo)
        self.hi = float(hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def canonical(self, p: Point) -> float:
        if isinstance(p, bool) or not isinstance(p, (Real, np.floating)):
            raise DomainError("interval points are real numbers", {"point": repr(p)})
        x = float(p)
        if not (self.lo <= x <= self.hi):
            raise DomainError("point outside interval", {"point": x, "lo": self.lo, "hi": self.hi})
        return x

    def _distance(self, a: float, b: float) -> float:
        return abs(a - b)

    def pairwise(self, A, B) -> np.ndarray:
        a = np.asarray(A, dtype=float)
        b = np.asarray(B, dtype=float)
        return np.abs(a[:, None] - b[None, :])

    def segments(self) -> List[Segment]:
        return [Segment(("I",), self.length)]

    def point_on(self, key, s):
        if s <= 0.0:
            return self.lo
        if s >= 1.0:
            return self.hi
        return self.lo + s * self.length

    def carrier(self, p):
        return ("I",), (p - self.lo) / self.length

    def describe(self):
        return {"kind": self.kind.value, "lo": self.lo, "hi": self.hi}


class StarSpace(SpaceHandle):
    """
    Star union of arm spaces glued at one point per arm.

    Points are ``(arm, x)``; the glue point is canonically ``(0, glue[0])``.
    Points on different arms are at distance d_n(a, p_n) + d_m(b, p_m).
    """

    kind = SpaceKind.STAR_UNION

    def __init__(self, arms: Sequence[SpaceHandle], glue: Sequence[Point]):
        if len(arms) < 1 or len(arms) != len(glue):
            raise DomainError("star needs one glue point per arm", {"arms": len(arms)})
        self.arms = tuple(arms)
        self.glue = tuple(arm.canonical(g) for arm, g in zip(self.arms, glue))
        self.center = (0, self.glue[0])

    def canonical(self, p):
        try:
            n, x = p
        except (TypeError, ValueError):
            raise DomainError("star points are (arm, x) pairs", {"point": repr(p)})
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or not 0 <= n < len(self.arms):
            raise DomainError("unknown star arm", {"arm": repr(n)})
        n = int(n)
        x = self.arms[n].canonical(x)
        if self.arms[n]._distance(x, self.glue[n]) == 0.0:
            return self.center
        return (n, x)

    def to_center(self, p) -> float:
        n, x = p
        return self.arms[n]._distance(x, self.glue[n])

    def _distance(self, a, b):
        if a[0] == b[0]:
            return self.arms[a[0]]._distance(a[1], b[1])
        return self.to_center(a) + self.to_center(b)

    def pairwise(self, A, B):
        ra = np.array([self.to_center(a) for a in A], dtype=float)
        rb = np.array([self.to_center(b) for b in B], dtype=float)
        out = ra[:, None] + rb[None, :]
        arm_a = np.array([a[0] for a in A], dtype=int)
        arm_b = np.array([b[0] for b in B], dtype=int)
        for n in np.intersect1d(arm_a, arm_b):
            ia = np.flatnonzero(arm_a == n)
            ib = np.flatnonzero(arm_b == n)
            block = self.arms[n].pairwise([A[i][1] for i in ia], [B[j][1] for j in ib])
            out[np.ix_(ia, ib)] = block
        return out

    def segments(self):
        return [
            Segment(("arm", n, seg.key), seg.length)
            for n, arm in enumerate(self.arms)
            for seg in arm.segments()
        ]

    def point_on(self, key, s):
        _, n, sub = key
        return self.canonical((n, self.arms[n].point_on(sub, s)))

    def carrier(self, p):
        n, x = p
        sub, s = self.arms[n].carrier(x)
        return ("arm", n, sub), s

    def required_marks(self):
        marks = []
        for n, arm in enumerate(self.arms):
            marks.append(self.canonical((n, self.glue[n])))
            marks.extend(self.canonical((n, m)) for m in arm.required_marks())
        return marks

    def describe(self):
        return {
            "kind": self.kind.value,
            "arms": [arm.describe() for arm in self.arms],
            "glue": list(self.glue),
        }


class BridgeSpace(SpaceHandle):
    """
    X₁ ∪ [p₁, p₂] ∪ X₂ with a unit bridge.

    Points are ``(0, x)`` in X₁, ``(1, s)`` on the bridge with s ∈ [0, 1] and
    ``(2, y)`` in X₂; bridge ends are identified with p₁ and p₂.
    """

    kind = SpaceKind.BRIDGE
    bridge_length = 1.0

    def __init__(self, left: SpaceHandle, p1: Point, right: SpaceHandle, p2: Point):
        self.left = left
        self.right = right
        self.p1 = left.canonical(p1)
        self.p2 = right.canonical(p2)

    def canonical(self, p):
        try:
            part, x = p
        except (TypeError, ValueError):
            raise DomainError("bridge points are (part, x) pairs", {"point": repr(p)})
        if part == 0:
            x = self.left.canonical(x)
            return (0, self.p1) if self.left._distance(x, self.p1) == 0.0 else (0, x)
        if part == 2:
            x = self.right.canonical(x)
            return (2, self.p2) if self.right._distance(x, self.p2) == 0.0 else (2, x)
        if part == 1:
            if isinstance(x, bool) or not isinstance(x, (Real, np.floating)) or not 0.0 <= float(x) <= 1.0:
                raise DomainError("bridge parameter must lie in [0, 1]", {"s": repr(x)})
            s = float(x)
            if s == 0.0:
                return (0, self.p1)
            if s == 1.0:
                return (2, self.p2)
            return (1, s)
        raise DomainError("unknown bridge part", {"part": repr(part)})

    def to_p1(self, p) -> float:
        part, x = p
        if part == 0:
            return self.left._distance(x, self.p1)
        if part == 1:
            return x
        return self.bridge_length + self.right._distance(x, self.p2)

    def to_p2(self, p) -> float:
        part, x = p
        if part == 0:
            return self.left._distance(x, self.p1) + self.bridge_length
        if part == 1:
            return self.bridge_length - x
        return self.right._distance(x, self.p2)

    def _distance(self, a, b):
        if a[0] == b[0]:
            if a[0] == 0:
                return self.left._distance(a[1], b[1])
            if a[0] == 2:
                return self.right._distance(a[1], b[1])
            return abs(a[1] - b[1])
        return min(self.to_p1(a) + self.to_p1(b), self.to_p2(a) + self.to_p2(b))

    def pairwise(self, A, B):
        a1 = np.array([self.to_p1(a) for a in A])
        b1 = np.array([self.to_p1(b) for b in B])
        a2 = np.array([self.to_p2(a) for a in A])
        b2 = np.array([self.to_p2(b) for b in B])
        out = np.minimum(a1[:, None] + b1[None, :], a2[:, None] + b2[None, :])
        part_a = np.array([a[0] for a in A], dtype=int)
        part_b = np.array([b[0] for b in B], dtype=int)
        pieces = {0: self.left, 2: self.right, 1: IntervalSpace(0.0, 1.0)}
        for part, space in pieces.items():
            ia = np.flatnonzero(part_a == part)
            ib = np.flatnonzero(part_b == part)
            if len(ia) and len(ib):
                block = space.pairwise([A[i][1] for i in ia], [B[j][1] for j in ib])
                out[np.ix_(ia, ib)] = block
        return out

    def segments(self):
        segs = [Segment(("L", s.key), s.length) for s in self.left.segments()]
        segs.append(Segment(("B",), self.bridge_length))
        segs.extend(Segment(("R", s.key), s.length) for s in self.right.segments())
        return segs

    def point_on(self, key, s):
        if key[0] == "B":
            return self.canonical((1, min(max(s, 0.0), 1.0)))
        if key[0] == "L":
            return self.canonical((0, self.left.point_on(key[1], s)))
        return self.canonical((2, self.right.point_on(key[1], s)))

    def carrier(self, p):
        part, x = p
        if part == 1:
            return ("B",), x
        if part == 0:
            sub, s = self.left.carrier(x)
            return ("L", sub), s
        sub, s = self.right.carrier(x)
        return ("R", sub), s

    def required_marks(self):
        marks = [(0, self.p1), (2, self.p2)]
        marks.extend(self.canonical((0, m)) for m in self.left.required_marks())
        marks.extend(self.canonical((2, m)) for m in self.right.required_marks())
        return marks

    def describe(self):
        return {
            "kind": self.kind.value,
            "left": self.left.describe(),
            "right": self.right.describe(),
            "p1": self.p1,
            "p2": self.p2,
        }


class CombSpace(SpaceHandle):
    """
    Comb over a base space: a scaled star of ``arms`` arms hangs at every d ∈ D.

    The tooth at dᵢ has arm length ``arm_length / i`` and the metric is the
    maximum of the base distance and the Euclidean distance between tooth
    vectors. Points are ``(x, None)`` on the base or ``(d, (key, arm, r))``.
    Only teeth listed in ``materialized`` appear as arcs of the complex.
    """

    kind = SpaceKind.COMB_PRODUCT

    def __init__(
        self,
        base: SpaceHandle,
        teeth: ToothIndex,
        arms: int,
        arm_length: float = 1.0,
        materialized: Sequence[Hashable] = (),
    ):
        if arms < 1:
            raise DomainError("comb teeth need at least one arm", {"arms": arms})
        if not arm_length > 0:
            raise DomainError("tooth arm length must be positive", {"arm_length": arm_length})
        self.base = base
        self.teeth = teeth
        self.arms = int(arms)
        self.arm_length = float(arm_length)
        self.materialized = tuple(materialized)
        self._materialized_set = frozenset(self.materialized)
        angles = 2.0 * math.pi * np.arange(self.arms) / self.arms
        self._directions = np.column_stack([np.cos(angles), np.sin(angles)])

    def scale(self, key) -> float:
        return self.arm_length / self.teeth.index(key)

    def canonical(self, p):
        try:
            x, tooth = p
        except (TypeError, ValueError):
            raise DomainError("comb points are (base point, tooth) pairs", {"point": repr(p)})
        x = self.base.canonical(x)
        if tooth is None:
            return (x, None)
        try:
            key, arm, r = tooth
        except (TypeError, ValueError):
            raise DomainError("tooth coordinates are (key, arm, radius)", {"tooth": repr(tooth)})
        if not self.teeth.is_member(key):
            raise DomainError("no tooth with this key", {"key": repr(key)})
        if self.teeth.point(key) != x:
            raise DomainError("tooth key does not sit over this base point", {"key": repr(key)})
        if not 0 <= arm < self.arms:
            raise DomainError("unknown tooth arm", {"arm": repr(arm)})
        r = float(r)
        scale = self.scale(key)
        if r < 0.0 or r > scale * (1.0 + 1e-12):
            raise DomainError("radius outside tooth", {"r": r, "scale": scale})
        if r == 0.0:
            return (x, None)
        return (x, (key, int(arm), min(r, scale)))

    def vector(self, p) -> np.ndarray:
        tooth = p[1]
        if tooth is None:
            return np.zeros(2)
        return tooth[2] * self._directions[tooth[1]]

    def _distance(self, a, b):
        d_base = self.base._distance(a[0], b[0])
        return max(d_base, float(np.hypot(*(self.vector(a) - self.vector(b)))))

    def pairwise(self, A, B):
        d_base = self.base.pairwise([a[0] for a in A], [b[0] for b in B])
        va = np.array([self.vector(a) for a in A]).reshape(len(A), 2)
        vb = np.array([self.vector(b) for b in B]).reshape(len(B), 2)
        return np.maximum(d_base, cdist(va, vb))

    def segments(self):
        segs = [Segment(("base", s.key), s.length) for s in self.base.segments()]
        for key in self.materialized:
            for arm in range(self.arms):
                segs.append(Segment(("tooth", key, arm), self.scale(key)))
        return segs

    def point_on(self, key, s):
        if key[0] == "base":
            return (self.base.point_on(key[1], s), None)
        _, tkey, arm = key
        root = self.teeth.point(tkey)
        if s <= 0.0:
            return (root, None)
        scale = self.scale(tkey)
        return (root, (tkey, arm, scale if s >= 1.0 else s * scale))

    def carrier(self, p):
        x, tooth = p
        if tooth is None:
            sub, s = self.base.carrier(x)
            return ("base", sub), s
        key, arm, r = tooth
        return ("tooth", key, arm), r / self.scale(key)

    def arc_length(self, key):
        if key[0] == "base":
            return self.base.arc_length(key[1])
        return self.scale(key[1])

    def required_marks(self):
        marks = [(m, None) for m in self.base.required_marks()]
        for key in self.teeth.window_keys():
            root = self.teeth.point(key)
            # roots over collapsed teeth of a nested base are not on the complex
            if self.base.retract(root) == root:
                marks.append((root, None))
        return marks

    def retract(self, p):
        x, tooth = p
        x_r = self.base.retract(x)
        if tooth is None:
            return (x_r, None)
        if x_r != x or tooth[0] not in self._materialized_set:
            return (x_r, None)
        return p

    def describe(self):
        return {
            "kind": self.kind.value,
            "base": self.base.describe(),
            "arms": self.arms,
            "arm_length": self.arm_length,
            "materialized": len(self.materialized),
        }


class TorusSpace(SpaceHandle):
    """Flat torus R²/Z² with the wrapped Euclidean metric."""

    kind = SpaceKind.TORUS
    diameter = math.sqrt(2.0) / 2.0

    def canonical(self, p):
        try:
            x, y = p
        except (TypeError, ValueError):
            raise DomainError("torus points are (x, y) pairs", {"point": repr(p)})
        out = []
        for c in (x, y):
            if isinstance(c, Fraction):
                out.append(c % 1)
            elif isinstance(c, (Real, np.floating)) and math.isfinite(float(c)):
                v = float(c) % 1.0
                out.append(0.0 if v >= 1.0 else v)
            else:
                raise DomainError("torus coordinates must be finite reals", {"point": repr(p)})
        return (out[0], out[1])

    def _distance(self, a, b):
        dx = abs(float(a[0]) - float(b[0])) % 1.0
        dy = abs(float(a[1]) - float(b[1])) % 1.0
        return math.hypot(min(dx, 1.0 - dx), min(dy, 1.0 - dy))

    @staticmethod
    def as_array(points) -> np.ndarray:
        arr = np.array([(float(p[0]), float(p[1])) for p in points], dtype=float).reshape(-1, 2)
        return wrap_unit(arr)

    def pairwise(self, A, B):
        a = self.as_array(A)
        b = self.as_array(B)
        d = np.abs(a[:, None, :] - b[None, :, :]) % 1.0
        d = np.minimum(d, 1.0 - d)
        return np.hypot(d[..., 0], d[..., 1])


def wrap_unit(arr: np.ndarray) -> np.ndarray:
    """Reduce coordinates to [0, 1), guarding the -0.0 → 1.0 rounding case."""
    out = np.mod(arr, 1.0)
    out[out >= 1.0] -= 1.0
    return out


# ─── Finite approximations ────────────────────────────────

@dataclass(frozen=True)
class FinitePointSet:
    """Finite sample of a compact set, ``mesh``-dense in it when known."""
    space: SpaceHandle
    points: Tuple[Point, ...]
    mesh: float = 0.0

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def union(self, other: "FinitePointSet") -> "FinitePointSet":
        _check_same_space(self.space, other.space)
        seen = dict.fromkeys(self.points)
        seen.update(dict.fromkeys(other.points))
        return FinitePointSet(self.space, tuple(seen), max(self.mesh, other.mesh))


def point_set(space: SpaceHandle, points: Sequence[Point], mesh: float = 0.0) -> FinitePointSet:
    """Validate and canonicalize ``points`` into a FinitePointSet."""
    return FinitePointSet(space, tuple(space.canonical(p) for p in points), float(mesh))


def _check_same_space(a: SpaceHandle, b: SpaceHandle) -> None:
    if a is not b:
        raise DomainError("point sets live in different spaces", {"a": a.kind.value, "b": b.kind.value})


def _require_nonempty(A: FinitePointSet, name: str) -> None:
    if len(A.points) == 0:
        raise DomainError(f"{name} is empty")


# ─── Operations ───────────────────────────────────────────

def distance(space: SpaceHandle, a: Point, b: Point) -> float:
    return space.distance(a, b)


def pairwise(space: SpaceHandle, A: Sequence[Point], B: Sequence[Point]) -> np.ndarray:
    return space.pairwise(list(A), list(B))


def diameter(space: SpaceHandle, A: FinitePointSet) -> float:
    """Largest pairwise distance in A."""
    _require_nonempty(A, "point set")
    _check_same_space(space, A.space)
    pts = list(A.points)
    best = 0.0
    for start in range(0, len(pts), CHUNK_ROWS):
        block = space.pairwise(pts[start:start + CHUNK_ROWS], pts)
        best = max(best, float(block.max()))
    return best


def build_eps_net(space: SpaceHandle, eps: float) -> FinitePointSet:
    """
    ε-dense finite subset of the space.

    Dendrite-like spaces are sampled arc by arc with spacing ≤ ε, keeping
    every arc end and required mark; the torus gets a K×K grid whose half
    cell diagonal is at most ε.
    """
    if not eps > 0:
        raise DomainError("net spacing must be positive", {"eps": eps})
    if space.kind is SpaceKind.TORUS:
        k = max(1, math.ceil(1.0 / (eps * math.sqrt(2.0))))
        pts = [(i / k, j / k) for i in range(k) for j in range(k)]
        return FinitePointSet(space, tuple(pts), float(eps))

    cuts: Dict[SegmentKey, List[float]] = {}
    for mark in space.required_marks():
        key, s = space.carrier(mark)
        cuts.setdefault(key, []).append(s)

    seen: Dict[Point, None] = {}
    for seg in space.segments():
        stops = sorted({0.0, 1.0, *(c for c in cuts.get(seg.key, []) if 0.0 < c < 1.0)})
        for s0, s1 in zip(stops, stops[1:]):
            n = max(1, math.ceil((s1 - s0) * seg.length / eps - 1e-12))
            for i in range(n + 1):
                s = s1 if i == n else s0 + (s1 - s0) * i / n
                seen.setdefault(space.point_on(seg.key, s), None)
    return FinitePointSet(space, tuple(seen), float(eps))


def hausdorff_distance(space: SpaceHandle, A: FinitePointSet, B: FinitePointSet) -> float:
    """max(sup_a inf_b d, sup_b inf_a d) over two finite samples."""
    _require_nonempty(A, "first point set")
    _require_nonempty(B, "second point set")
    _check_same_space(A.space, B.space)
    _check_same_space(space, A.space)
    return hausdorff_points(space, list(A.points), list(B.points))


def hausdorff_points(space: SpaceHandle, A: Sequence[Point], B: Sequence[Point]) -> float:
    """Hausdorff distance between raw canonical point lists."""
    if not A or not B:
        raise DomainError("Hausdorff distance of an empty set")
    if space.kind is SpaceKind.TORUS:
        return torus_hausdorff(TorusSpace.as_array(A), TorusSpace.as_array(B))
    return _hausdorff_chunked(space, list(A), list(B))


def _hausdorff_chunked(space: SpaceHandle, A: List[Point], B: List[Point]) -> float:
    col_min = np.full(len(B), np.inf)
    row_best = 0.0
    for start in range(0, len(A), CHUNK_ROWS):
        block = space.pairwise(A[start:start + CHUNK_ROWS], B)
        row_best = max(row_best, float(block.min(axis=1).max()))
        np.minimum(col_min, block.min(axis=0), out=col_min)
    return max(row_best, float(col_min.max()))


def torus_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Hausdorff distance of two [0,1)² samples on the torus via periodic KD-trees."""
    tree_a = cKDTree(a, boxsize=1.0)
    tree_b = cKDTree(b, boxsize=1.0)
    d_ab, _ = tree_b.query(a)
    d_ba, _ = tree_a.query(b)
    return float(max(d_ab.max(), d_ba.max()))


def directed_torus_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of ``a`` to the sample ``b``."""
    d, _ = cKDTree(b, boxsize=1.0).query(a)
    return d


# ─── Maps ─────────────────────────────────────────────────

class StructuralMap(ABC):
    """
    Exactly evaluable self-map of a space, with an exact inverse when it is
    a homeomorphism.
    """

    is_homeomorphism: bool = True
    is_monotone: bool = True

    def __init__(self, space: SpaceHandle):
        self.space = space

    @abstractmethod
    def __call__(self, p: Point) -> Point:
        """Image of a canonical point."""

    def inverse(self, p: Point) -> Point:
        raise ContractError(f"{type(self).__name__} has no inverse")

    def iterate(self, p: Point, n: int) -> Point:
        """fⁿ(p); negative n iterates the inverse."""
        step = self if n >= 0 else self.inverse
        for _ in range(abs(n)):
            p = step(p)
        return p

    def orbit(self, p: Point, n: int) -> List[Point]:
        """[p, f(p), …, fⁿ(p)]."""
        out = [p]
        for _ in range(n):
            p = self(p)
            out.append(p)
        return out

    def apply_many(self, points: Sequence[Point]) -> List[Point]:
        return [self(p) for p in points]

    def describe(self) -> Dict[str, Any]:
        return {"map": type(self).__name__}


class IdentityMap(StructuralMap):
    """The identity, used as the non-shadowing control."""

    def __call__(self, p):
        return p

    def inverse(self, p):
        return p

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        return xs


class ProjectionMap(StructuralMap):
    """Π: comb → base, (x, tooth) ↦ x. Monotone, not injective."""

    is_homeomorphism = False

    def __init__(self, comb: CombSpace):
        super().__init__(comb)
        self.codomain = comb.base

    def __call__(self, p):
        return p[0]

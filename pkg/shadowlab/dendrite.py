"""
SHADOWLAB Dendrite Complexes
Finite metric trees approximating dendrites: geodesics, point orders,
subtrees as subcontinua, and the image/preimage mechanics of monotone maps.

Enhanced with:
- Binary-lifting LCA for vectorized geodesic distance matrices
- Canonical subtree algebra (intersection, union, span, balls)
- Arc-bisection preimages for non-injective monotone maps
- Lossless JSON file format with labels and a map-description section
"""

import bisect
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from shadowlab.core.errors import ContractError, DomainError, InvariantViolation
from shadowlab.core.structs import VerificationReport
from shadowlab.metric import FinitePointSet, Point, SpaceHandle, StructuralMap

logger = logging.getLogger("shadowlab.dendrite")

DENDRITE_SCHEMA = "shadowlab.dendrite/1"
IMAGE_SAMPLES_PER_INTERVAL = 64
BISECTION_STEPS = 60
POSITION_TOL = 1e-12


# ─── Value types ──────────────────────────────────────────

@dataclass(frozen=True, order=True)
class Location:
    """A point of the complex: arc-length fraction ``t`` along ``edge``."""
    edge: int
    t: float

    def to_dict(self) -> Dict[str, Any]:
        return {"edge": self.edge, "t": self.t}


@dataclass(frozen=True)
class Edge:
    id: int
    u: int
    v: int
    length: float
    key: Optional[Tuple] = None
    s_u: float = 0.0
    s_v: float = 1.0


Interval = Tuple[int, float, float]


class UnionFind:
    def __init__(self, items: Iterable[Hashable]):
        self.parent = {x: x for x in items}
        self.rank = {x: 0 for x in self.parent}

    def find(self, x):
        y = self.parent[x]
        if self.parent[y] != y:
            y = self.parent[x] = self.find(y)
        return y

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x == y:
            return
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        elif self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        self.parent[y] = x
        del self.rank[y]

    def __len__(self):
        return len(self.rank)


@dataclass(frozen=True)
class Subtree:
    """
    Connected closed subset of a complex, stored as sorted, merged
    ``(edge, t0, t1)`` intervals. A single point is one degenerate interval.
    """
    intervals: Tuple[Interval, ...]
    complex: "DendriteComplex" = field(compare=False, hash=False, repr=False)

    def vertices(self) -> set:
        """Vertices covered by the subtree."""
        cx = self.complex
        out = set()
        for e, t0, t1 in self.intervals:
            edge = cx.edges[e]
            if t0 == 0.0:
                out.add(edge.u)
            if t1 == 1.0:
                out.add(edge.v)
        return out

    def endpoints(self) -> List[Location]:
        """Canonical locations of all interval ends (contains every leaf)."""
        seen: Dict[Location, None] = {}
        for e, t0, t1 in self.intervals:
            seen.setdefault(self.complex.canonical(Location(e, t0)), None)
            seen.setdefault(self.complex.canonical(Location(e, t1)), None)
        return list(seen)

    def contains(self, loc: Location) -> bool:
        loc = self.complex.canonical(loc)
        vertex = self.complex.vertex_of(loc)
        if vertex is not None:
            if vertex in self.vertices():
                return True
            return any(e == loc.edge and t0 == t1 == loc.t for e, t0, t1 in self.intervals)
        return any(e == loc.edge and t0 <= loc.t <= t1 for e, t0, t1 in self.intervals)

    def is_connected(self) -> bool:
        return subtree_is_connected(self)

    def length(self) -> float:
        return sum((t1 - t0) * self.complex.edges[e].length for e, t0, t1 in self.intervals)

    def is_point(self) -> bool:
        return len(self.intervals) == 1 and self.intervals[0][1] == self.intervals[0][2]

    def to_list(self) -> List[List[float]]:
        return [[e, t0, t1] for e, t0, t1 in self.intervals]

    def to_dict(self) -> Dict[str, Any]:
        return {"intervals": self.to_list()}


# ─── Complex ──────────────────────────────────────────────

class DendriteComplex:
    """
    Finite metric tree. Vertices are ``0..V-1``; edges carry positive
    lengths and, when the complex is built from a space, the arc of the
    space they realize.
    """

    def __init__(
        self,
        n_vertices: int,
        edges: Sequence[Edge],
        space: Optional[SpaceHandle] = None,
        vertex_points: Optional[Sequence[Point]] = None,
    ):
        self.n_vertices = int(n_vertices)
        self.edges: Tuple[Edge, ...] = tuple(edges)
        self.space = space
        self.vertex_points = tuple(vertex_points) if vertex_points is not None else None
        self._validate()
        self.adjacency: List[List[Tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for e in self.edges:
            self.adjacency[e.u].append((e.id, e.v))
            self.adjacency[e.v].append((e.id, e.u))
        self._root_tree()
        self._vertex_index: Dict[Point, int] = {}
        self._carrier_index: Dict[Tuple, Tuple[List[float], List[int]]] = {}
        if space is not None and self.vertex_points is not None:
            self._vertex_index = {p: i for i, p in enumerate(self.vertex_points)}
            per_key: Dict[Tuple, List[Tuple[float, int]]] = {}
            for e in self.edges:
                per_key.setdefault(e.key, []).append((e.s_u, e.id))
            for key, items in per_key.items():
                items.sort()
                self._carrier_index[key] = ([s for s, _ in items], [i for _, i in items])

    # Construction

    def _validate(self) -> None:
        if self.n_vertices < 1:
            raise DomainError("complex needs at least one vertex")
        if len(self.edges) != self.n_vertices - 1:
            raise DomainError(
                "a tree has |E| = |V| - 1",
                {"vertices": self.n_vertices, "edges": len(self.edges)},
            )
        uf = UnionFind(range(self.n_vertices))
        for i, e in enumerate(self.edges):
            if e.id != i:
                raise DomainError("edge ids must be 0..E-1 in order", {"edge": e.id})
            if not (0 <= e.u < self.n_vertices and 0 <= e.v < self.n_vertices) or e.u == e.v:
                raise DomainError("edge endpoints invalid", {"edge": e.id})
            if not e.length > 0:
                raise DomainError("edge lengths must be positive", {"edge": e.id, "length": e.length})
            uf.union(e.u, e.v)
        if len(uf) != 1:
            raise DomainError("complex is not connected")

    @classmethod
    def from_edges(cls, n_vertices: int, edges: Sequence[Tuple[int, int, float]]) -> "DendriteComplex":
        return cls(n_vertices, [Edge(i, int(u), int(v), float(l)) for i, (u, v, l) in enumerate(edges)])

    @classmethod
    def from_space(cls, space: SpaceHandle, marks: Sequence[Point] = ()) -> "DendriteComplex":
        """
        Subdivide the arcs of ``space`` at its required marks plus ``marks``.
        Marks become vertices holding exactly the given point.
        """
        cuts: Dict[Tuple, Dict[float, Point]] = {}
        for mark in list(space.required_marks()) + [space.canonical(m) for m in marks]:
            key, s = space.carrier(mark)
            cuts.setdefault(key, {})[s] = mark

        vertex_points: List[Point] = []
        index: Dict[Point, int] = {}

        def vertex(p: Point) -> int:
            if p not in index:
                index[p] = len(vertex_points)
                vertex_points.append(p)
            return index[p]

        edges: List[Edge] = []
        for seg in space.segments():
            marks_on = cuts.get(seg.key, {})
            stops = sorted({0.0, 1.0, *(s for s in marks_on if 0.0 <= s <= 1.0)})
            pts = [marks_on.get(s) if s in marks_on else space.point_on(seg.key, s) for s in stops]
            for (s0, p0), (s1, p1) in zip(zip(stops, pts), zip(stops[1:], pts[1:])):
                length = (s1 - s0) * seg.length
                if length <= 0.0 or p0 == p1:
                    continue
                edges.append(Edge(len(edges), vertex(p0), vertex(p1), length, seg.key, s0, s1))
        cx = cls(len(vertex_points), edges, space=space, vertex_points=vertex_points)
        logger.debug(f"Built complex: {cx.n_vertices} vertices, {len(edges)} edges over {space.kind.value}")
        return cx

    def _root_tree(self) -> None:
        n = self.n_vertices
        parent = np.full(n, -1, dtype=np.int64)
        parent_edge = np.full(n, -1, dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        dist = np.zeros(n, dtype=float)
        order = [0]
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        for w in order:
            for e_id, x in self.adjacency[w]:
                if not seen[x]:
                    seen[x] = True
                    parent[x] = w
                    parent_edge[x] = e_id
                    depth[x] = depth[w] + 1
                    dist[x] = dist[w] + self.edges[e_id].length
                    order.append(x)
        self.parent, self.parent_edge, self.depth, self.dist_root = parent, parent_edge, depth, dist
        levels = max(1, int(depth.max()).bit_length())
        up = np.empty((levels, n), dtype=np.int64)
        up[0] = np.where(parent < 0, np.arange(n), parent)
        for k in range(1, levels):
            up[k] = up[k - 1][up[k - 1]]
        self._up = up

    # Basic queries

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def degree(self, vertex: int) -> int:
        return len(self.adjacency[vertex])

    def leaves(self) -> List[int]:
        return [v for v in range(self.n_vertices) if self.degree(v) == 1]

    def vertex_location(self, vertex: int) -> Location:
        e_id = min(e for e, _ in self.adjacency[vertex]) if self.adjacency[vertex] else None
        if e_id is None:
            raise DomainError("isolated vertex has no location", {"vertex": vertex})
        return Location(e_id, 0.0 if self.edges[e_id].u == vertex else 1.0)

    def vertex_of(self, loc: Location) -> Optional[int]:
        if loc.t == 0.0:
            return self.edges[loc.edge].u
        if loc.t == 1.0:
            return self.edges[loc.edge].v
        return None

    def canonical(self, loc: Location) -> Location:
        if not isinstance(loc, Location) or not 0 <= loc.edge < len(self.edges):
            raise DomainError("invalid edge id", {"location": repr(loc)})
        if not 0.0 <= loc.t <= 1.0:
            raise DomainError("edge parameter outside [0, 1]", {"location": repr(loc)})
        vertex = self.vertex_of(loc)
        if vertex is None:
            return loc
        return self.vertex_location(vertex)

    def point_order(self, loc: Location) -> int:
        """Number of components of the complement of ``loc``."""
        loc = self.canonical(loc)
        vertex = self.vertex_of(loc)
        return 2 if vertex is None else self.degree(vertex)

    # Space correspondence

    def locate(self, p: Point) -> Location:
        """Location of a space point (vertex points first, then carrier arcs)."""
        if self.space is None:
            if isinstance(p, Location):
                return self.canonical(p)
            raise DomainError("complex without a space only addresses Locations")
        p = self.space.canonical(p)
        vertex = self._vertex_index.get(p)
        if vertex is not None:
            return self.vertex_location(vertex)
        key, s = self.space.carrier(p)
        entry = self._carrier_index.get(key)
        if entry is None:
            raise DomainError("point is not on the complex", {"point": repr(p)})
        starts, ids = entry
        i = max(0, bisect.bisect_right(starts, s) - 1)
        e = self.edges[ids[i]]
        t = (s - e.s_u) / (e.s_v - e.s_u)
        return self.canonical(Location(e.id, min(max(t, 0.0), 1.0)))

    def point(self, loc: Location) -> Point:
        loc = self.canonical(loc)
        if self.space is None:
            return loc
        vertex = self.vertex_of(loc)
        if vertex is not None:
            return self.vertex_points[vertex]
        e = self.edges[loc.edge]
        return self.space.point_on(e.key, e.s_u + loc.t * (e.s_v - e.s_u))

    def points(self, locs: Sequence[Location]) -> List[Point]:
        return [self.point(loc) for loc in locs]

    # Geodesics

    def lca(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.array(a, dtype=np.int64, copy=True)
        b = np.array(b, dtype=np.int64, copy=True)
        swap = self.depth[a] < self.depth[b]
        a[swap], b[swap] = b[swap], a[swap].copy()
        diff = self.depth[a] - self.depth[b]
        for k in range(self._up.shape[0]):
            bit = (diff >> k) & 1 == 1
            a[bit] = self._up[k][a[bit]]
        for k in range(self._up.shape[0] - 1, -1, -1):
            ua, ub = self._up[k][a], self._up[k][b]
            move = ua != ub
            a[move], b[move] = ua[move], ub[move]
        return np.where(a == b, a, self._up[0][a])

    def vertex_distance(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        c = self.lca(a, b)
        return self.dist_root[a] + self.dist_root[b] - 2.0 * self.dist_root[c]

    def _loc_arrays(self, locs: Sequence[Location]):
        e = np.array([loc.edge for loc in locs], dtype=np.int64)
        t = np.array([loc.t for loc in locs], dtype=float)
        u = np.array([self.edges[i].u for i in e], dtype=np.int64)
        v = np.array([self.edges[i].v for i in e], dtype=np.int64)
        length = np.array([self.edges[i].length for i in e], dtype=float)
        return e, t, u, v, length

    def geodesic_matrix(self, A: Sequence[Location], B: Sequence[Location]) -> np.ndarray:
        """Pairwise geodesic distances between two location lists."""
        if len(A) == 0 or len(B) == 0:
            return np.zeros((len(A), len(B)))
        ea, ta, ua, va, la = self._loc_arrays(A)
        eb, tb, ub, vb, lb = self._loc_arrays(B)
        n, m = len(A), len(B)
        ends_a = [(ua, ta * la), (va, (1.0 - ta) * la)]
        ends_b = [(ub, tb * lb), (vb, (1.0 - tb) * lb)]
        best = np.full((n, m), np.inf)
        for xa, oa in ends_a:
            for xb, ob in ends_b:
                d = self.vertex_distance(np.repeat(xa, m), np.tile(xb, n)).reshape(n, m)
                np.minimum(best, d + oa[:, None] + ob[None, :], out=best)
        same = ea[:, None] == eb[None, :]
        if same.any():
            direct = np.abs(ta[:, None] - tb[None, :]) * la[:, None]
            best = np.where(same, np.minimum(best, direct), best)
        return best

    def geodesic(self, a: Location, b: Location) -> float:
        return float(self.geodesic_matrix([self.canonical(a)], [self.canonical(b)])[0, 0])

    def vertex_path_edges(self, x: int, y: int) -> List[int]:
        """Edge ids along the unique vertex path x → y."""
        c = int(self.lca(np.array([x]), np.array([y]))[0])
        up_x, up_y = [], []
        while x != c:
            up_x.append(int(self.parent_edge[x]))
            x = int(self.parent[x])
        while y != c:
            up_y.append(int(self.parent_edge[y]))
            y = int(self.parent[y])
        return up_x + up_y[::-1]

    def route(self, a: Location, b: Location) -> List[Tuple[int, float, float]]:
        """Ordered pieces (edge, t_from, t_to) of the arc from a to b."""
        a, b = self.canonical(a), self.canonical(b)
        if a.edge == b.edge:
            return [(a.edge, a.t, b.t)]
        ea, eb = self.edges[a.edge], self.edges[b.edge]
        best = None
        for xa, ta_end, oa in ((ea.u, 0.0, a.t * ea.length), (ea.v, 1.0, (1.0 - a.t) * ea.length)):
            for xb, tb_end, ob in ((eb.u, 0.0, b.t * eb.length), (eb.v, 1.0, (1.0 - b.t) * eb.length)):
                d = oa + float(self.vertex_distance([xa], [xb])[0]) + ob
                if best is None or d < best[0] - 1e-15:
                    best = (d, xa, ta_end, xb, tb_end)
        _, xa, ta_end, xb, tb_end = best
        pieces = [(a.edge, a.t, ta_end)]
        w = xa
        for e_id in self.vertex_path_edges(xa, xb):
            e = self.edges[e_id]
            if e.u == w:
                pieces.append((e_id, 0.0, 1.0))
                w = e.v
            else:
                pieces.append((e_id, 1.0, 0.0))
                w = e.u
        pieces.append((b.edge, tb_end, b.t))
        return pieces

    def path(self, a: Location, b: Location) -> Subtree:
        """The unique arc from a to b."""
        pieces = self.route(a, b)
        intervals = [(e, min(s, t), max(s, t)) for e, s, t in pieces]
        if len(pieces) > 1:
            # pieces meet at vertices; keep the joint even if every piece is degenerate
            e, _, t = pieces[0]
            intervals.append((e, t, t))
        return make_subtree(self, intervals)

    def walk(self, a: Location, b: Location, s: float) -> Location:
        """The point at geodesic distance min(s, d(a, b)) from a toward b."""
        for e_id, t0, t1 in self.route(a, b):
            length = abs(t1 - t0) * self.edges[e_id].length
            if s <= length and length > 0.0:
                return self.canonical(Location(e_id, t0 + (t1 - t0) * (s / length)))
            s -= length
        return self.canonical(b)

    def ball(self, center: Location, radius: float) -> Subtree:
        """Closed geodesic ball as a subtree."""
        center = self.canonical(center)
        if radius <= 0.0:
            return make_subtree(self, [(center.edge, center.t, center.t)])
        intervals: List[Interval] = []
        e = self.edges[center.edge]
        span = radius / e.length
        lo, hi = max(0.0, center.t - span), min(1.0, center.t + span)
        intervals.append((e.id, lo, hi))
        frontier = []
        if center.t - span <= 0.0:
            frontier.append((e.u, radius - center.t * e.length, e.id))
        if center.t + span >= 1.0:
            frontier.append((e.v, radius - (1.0 - center.t) * e.length, e.id))
        while frontier:
            w, budget, came = frontier.pop()
            for e_id, x in self.adjacency[w]:
                if e_id == came:
                    continue
                edge = self.edges[e_id]
                frac = min(1.0, budget / edge.length)
                if edge.u == w:
                    intervals.append((e_id, 0.0, frac))
                else:
                    intervals.append((e_id, 1.0 - frac, 1.0))
                if budget >= edge.length:
                    frontier.append((x, budget - edge.length, e_id))
        return make_subtree(self, intervals)

    # Sampling

    def fine_grid(self, spacing: float) -> "FineGrid":
        """Locations on every edge at spacing ≤ ``spacing`` with the grid adjacency."""
        if not spacing > 0:
            raise DomainError("grid spacing must be positive", {"spacing": spacing})
        locs: List[Location] = []
        index: Dict[Location, int] = {}
        pairs: List[Tuple[int, int]] = []

        def idx(loc: Location) -> int:
            loc = self.canonical(loc)
            if loc not in index:
                index[loc] = len(locs)
                locs.append(loc)
            return index[loc]

        for e in self.edges:
            n = max(1, math.ceil(e.length / spacing - 1e-12))
            prev = idx(Location(e.id, 0.0))
            for i in range(1, n + 1):
                cur = idx(Location(e.id, 1.0 if i == n else i / n))
                pairs.append((prev, cur))
                prev = cur
        return FineGrid(self, tuple(locs), np.array(pairs, dtype=np.int64).reshape(-1, 2), float(spacing))

    def sample_subtree(self, A: Subtree, spacing: float) -> List[Location]:
        """Locations covering A with gaps ≤ ``spacing`` (all interval ends included)."""
        seen: Dict[Location, None] = {}
        for e_id, t0, t1 in A.intervals:
            length = (t1 - t0) * self.edges[e_id].length
            n = max(1, math.ceil(length / spacing - 1e-12)) if length > 0 else 0
            for i in range(n + 1):
                t = t1 if i == n else t0 + (t1 - t0) * i / max(n, 1)
                seen.setdefault(self.canonical(Location(e_id, t)), None)
        return list(seen)

    def random_location(self, rng: np.random.Generator) -> Location:
        lengths = np.array([e.length for e in self.edges])
        e_id = int(rng.choice(len(self.edges), p=lengths / lengths.sum()))
        return self.canonical(Location(e_id, float(rng.uniform(0.0, 1.0))))

    def random_subtree(self, rng: np.random.Generator, k: int = 2) -> Subtree:
        return connected_span(self, [self.random_location(rng) for _ in range(k)])

    def whole(self) -> Subtree:
        return make_subtree(self, [(e.id, 0.0, 1.0) for e in self.edges])

    def tree_diameter(self) -> float:
        leaves = self.leaves() or [0]
        d = self.vertex_distance(np.repeat(leaves, len(leaves)), np.tile(leaves, len(leaves)))
        return float(d.max())


@dataclass(frozen=True)
class FineGrid:
    """Sample locations of a complex with the path-graph adjacency between them."""
    complex: DendriteComplex
    locations: Tuple[Location, ...]
    pairs: np.ndarray
    spacing: float

    def __len__(self) -> int:
        return len(self.locations)

    def components(self, mask: np.ndarray) -> int:
        """Number of connected components of the grid restricted to ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        keep = np.flatnonzero(mask)
        if keep.size == 0:
            return 0
        remap = np.full(len(self.locations), -1, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        sel = mask[self.pairs[:, 0]] & mask[self.pairs[:, 1]]
        rows, cols = remap[self.pairs[sel, 0]], remap[self.pairs[sel, 1]]
        graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(keep.size, keep.size))
        n, _ = connected_components(graph, directed=False)
        return int(n)


# ─── Subtree algebra ──────────────────────────────────────

def make_subtree(cx: DendriteComplex, intervals: Iterable[Interval]) -> Subtree:
    """Canonical form: per-edge merge, sorted, points covered elsewhere dropped."""
    per_edge: Dict[int, List[Tuple[float, float]]] = {}
    points: List[Location] = []
    for e, t0, t1 in intervals:
        if not 0 <= e < len(cx.edges):
            raise DomainError("invalid edge id", {"edge": e})
        t0, t1 = float(max(0.0, t0)), float(min(1.0, t1))
        if t0 > t1:
            continue
        if t0 == t1:
            points.append(cx.canonical(Location(e, t0)))
        else:
            per_edge.setdefault(e, []).append((t0, t1))

    merged: List[Interval] = []
    for e in sorted(per_edge):
        spans = sorted(per_edge[e])
        cur0, cur1 = spans[0]
        for s0, s1 in spans[1:]:
            if s0 <= cur1:
                cur1 = max(cur1, s1)
            else:
                merged.append((e, cur0, cur1))
                cur0, cur1 = s0, s1
        merged.append((e, cur0, cur1))

    covered = Subtree(tuple(merged), cx)
    for p in dict.fromkeys(points):
        if not covered.contains(p):
            merged.append((p.edge, p.t, p.t))
            covered = Subtree(tuple(sorted(merged)), cx)
    return Subtree(tuple(sorted(merged)), cx)


def subtree_is_connected(A: Subtree) -> bool:
    cx = A.complex
    if not A.intervals:
        return False
    uf = UnionFind(range(len(A.intervals)))
    touching: Dict[int, int] = {}
    for i, (e, t0, t1) in enumerate(A.intervals):
        edge = cx.edges[e]
        ends = []
        if t0 == 0.0:
            ends.append(edge.u)
        if t1 == 1.0:
            ends.append(edge.v)
        for w in ends:
            if w in touching:
                uf.union(i, touching[w])
            else:
                touching[w] = i
    return len(uf) == 1


def _same_complex(A: Subtree, B: Subtree) -> DendriteComplex:
    if A.complex is not B.complex:
        raise DomainError("subtrees live on different complexes")
    return A.complex


def subtree_intersection(A: Subtree, B: Subtree) -> Optional[Subtree]:
    """A ∩ B as a canonical subtree, or None when empty."""
    cx = _same_complex(A, B)
    out: List[Interval] = []
    by_edge: Dict[int, List[Tuple[float, float]]] = {}
    for e, t0, t1 in B.intervals:
        by_edge.setdefault(e, []).append((t0, t1))
    for e, a0, a1 in A.intervals:
        for b0, b1 in by_edge.get(e, []):
            lo, hi = max(a0, b0), min(a1, b1)
            if lo <= hi:
                out.append((e, lo, hi))
    for w in A.vertices() & B.vertices():
        loc = cx.vertex_location(w)
        out.append((loc.edge, loc.t, loc.t))
    # degenerate points of one side that lie in the other
    for X, Y in ((A, B), (B, A)):
        for e, t0, t1 in X.intervals:
            if t0 == t1 and Y.contains(Location(e, t0)):
                out.append((e, t0, t1))
    if not out:
        return None
    result = make_subtree(cx, out)
    if not result.is_connected():
        raise InvariantViolation("intersection of subtrees is disconnected", {"intervals": result.to_list()})
    return result


def subtree_union(A: Subtree, B: Subtree) -> Subtree:
    cx = _same_complex(A, B)
    return make_subtree(cx, list(A.intervals) + list(B.intervals))


def connected_span(cx: DendriteComplex, locations: Union[Sequence[Location], FinitePointSet]) -> Subtree:
    """Smallest subtree containing every location (points are located first)."""
    if isinstance(locations, FinitePointSet):
        locs = [cx.locate(p) for p in locations.points]
    else:
        locs = [cx.canonical(loc) for loc in locations]
    if not locs:
        raise DomainError("span of an empty set")
    first = locs[0]
    intervals: List[Interval] = [(first.edge, first.t, first.t)]
    for loc in dict.fromkeys(locs[1:]):
        intervals.extend(cx.path(first, loc).intervals)
    return make_subtree(cx, intervals)


def complex_of(space: SpaceHandle) -> DendriteComplex:
    """The complex of a dendrite-like space, built once and cached on the space."""
    cx = getattr(space, "_complex", None)
    if cx is None:
        cx = DendriteComplex.from_space(space)
        space._complex = cx
    return cx


def geodesic_distance(cx: DendriteComplex, a: Location, b: Location) -> float:
    return cx.geodesic(a, b)


def point_order(cx: DendriteComplex, p: Location) -> int:
    return cx.point_order(p)


def distance_to_subtree(cx: DendriteComplex, locs: Sequence[Location], A: Subtree) -> np.ndarray:
    """Geodesic distance from each location to A (0 inside A)."""
    ends = A.endpoints()
    d = cx.geodesic_matrix(list(locs), ends).min(axis=1)
    inside = np.array([A.contains(loc) for loc in locs], dtype=bool)
    d[inside] = 0.0
    return d


# ─── Maps on complexes ────────────────────────────────────

class DendriteMap:
    """
    A map between complexes induced by a map of their spaces.

    With ``retract`` the image is pushed onto the materialized part of the
    codomain space (non-materialized teeth collapse to their roots).
    """

    def __init__(
        self,
        domain: DendriteComplex,
        fn: Union[StructuralMap, Callable[[Point], Point]],
        codomain: Optional[DendriteComplex] = None,
        inverse: Optional[Callable[[Point], Point]] = None,
        is_homeomorphism: Optional[bool] = None,
        is_monotone: Optional[bool] = None,
        retract: bool = False,
        name: str = "",
    ):
        self.domain = domain
        self.codomain = codomain or domain
        self.fn = fn
        self.retract = retract
        homeo_default = getattr(fn, "is_homeomorphism", False) and not retract
        self.is_homeomorphism = homeo_default if is_homeomorphism is None else is_homeomorphism
        self.is_monotone = getattr(fn, "is_monotone", False) if is_monotone is None else is_monotone
        if inverse is None and self.is_homeomorphism and isinstance(fn, StructuralMap):
            inverse = fn.inverse
        self._inverse = inverse
        self.name = name or getattr(fn, "__name__", type(fn).__name__)
        self._vertex_images: Dict[int, Location] = {}

    def map_point(self, p: Point) -> Point:
        q = self.fn(p)
        if self.retract and self.codomain.space is not None:
            q = self.codomain.space.retract(q)
        return q

    def __call__(self, loc: Location) -> Location:
        return self.codomain.locate(self.map_point(self.domain.point(loc)))

    def vertex_image(self, vertex: int) -> Location:
        if vertex not in self._vertex_images:
            self._vertex_images[vertex] = self(self.domain.vertex_location(vertex))
        return self._vertex_images[vertex]

    def inverse_map(self) -> Optional["DendriteMap"]:
        if self._inverse is None:
            return None
        return DendriteMap(
            self.codomain, self._inverse, codomain=self.domain, inverse=self.fn,
            is_homeomorphism=True, is_monotone=True, name=f"{self.name}^-1",
        )

    def compose_power(self, n: int) -> Callable[[Location], Location]:
        def power(loc: Location) -> Location:
            for _ in range(n):
                loc = self(loc)
            return loc
        return power


def image_subtree(f: DendriteMap, A: Subtree, with_budget: bool = False):
    """
    f(A) as a canonical subtree.

    Monotone maps send arcs onto arcs, so the image is spanned by the images
    of the interval ends. Other maps are sampled at 64 points per interval
    and spanned; the budget is the largest image gap between samples.
    """
    if f.is_monotone:
        images = [f(loc) for loc in A.endpoints()]
        out = connected_span(f.codomain, images)
        return (out, 0.0) if with_budget else out
    images: List[Location] = []
    budget = 0.0
    for e, t0, t1 in A.intervals:
        ts = np.linspace(t0, t1, IMAGE_SAMPLES_PER_INTERVAL) if t1 > t0 else np.array([t0])
        locs = [f(Location(e, float(t))) for t in ts]
        if len(locs) > 1:
            gaps = [f.codomain.geodesic(a, b) for a, b in zip(locs, locs[1:])]
            budget = max(budget, max(gaps))
        images.extend(locs)
    out = connected_span(f.codomain, images)
    return (out, budget) if with_budget else out


def preimage_subtree(f: DendriteMap, A: Subtree) -> Optional[Subtree]:
    """f⁻¹(A) for a monotone map; None when A misses the image."""
    if not f.is_monotone:
        raise ContractError("preimage_subtree needs a monotone map", {"map": f.name})
    if A.complex is not f.codomain:
        raise DomainError("subtree is not on the map's codomain")
    inv = f.inverse_map() if f.is_homeomorphism else None
    if inv is not None:
        return image_subtree(inv, A)

    dom, cod = f.domain, f.codomain
    out: List[Interval] = []
    for e in dom.edges:
        fu, fv = f.vertex_image(e.u), f.vertex_image(e.v)
        in_u, in_v = A.contains(fu), A.contains(fv)
        if in_u and in_v:
            out.append((e.id, 0.0, 1.0))
            continue
        arc_len = cod.geodesic(fu, fv)
        if arc_len <= POSITION_TOL:
            continue
        hit = subtree_intersection(cod.path(fu, fv), A)
        if hit is None:
            continue
        positions = cod.geodesic_matrix([fu], hit.endpoints())[0]
        alpha = 0.0 if in_u else float(positions.min())
        beta = arc_len if in_v else float(positions.max())

        def position(t: float) -> float:
            return cod.geodesic(fu, f(Location(e.id, t)))

        t_lo = 0.0 if in_u else _bisect_first(position, alpha - POSITION_TOL)
        t_hi = 1.0 if in_v else _bisect_last(position, beta + POSITION_TOL)
        if t_lo <= t_hi:
            out.append((e.id, t_lo, t_hi))
    if not out:
        return None
    result = make_subtree(dom, out)
    if not result.is_connected():
        raise InvariantViolation("preimage of a subtree under a monotone map is disconnected",
                                 {"map": f.name, "intervals": result.to_list()})
    return result


def _bisect_first(position: Callable[[float], float], level: float) -> float:
    """Least t with position(t) ≥ level for a nondecreasing position."""
    lo, hi = 0.0, 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if position(mid) >= level:
            hi = mid
        else:
            lo = mid
    return hi


def _bisect_last(position: Callable[[float], float], level: float) -> float:
    """Greatest t with position(t) ≤ level for a nondecreasing position."""
    lo, hi = 0.0, 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if position(mid) <= level:
            lo = mid
        else:
            hi = mid
    return lo


def verify_monotone(f: DendriteMap, samples: int = 200, seed: int = 0, spacing: Optional[float] = None) -> VerificationReport:
    """
    Sampled monotonicity check: the fine-grid preimage of random points must
    be connected in the grid graph.
    """
    spacing = spacing or f.domain.total_length / 2000.0
    grid = f.domain.fine_grid(spacing)
    images = [f(loc) for loc in grid.locations]
    a, b = grid.pairs[:, 0], grid.pairs[:, 1]
    jumps = np.array([f.codomain.geodesic(images[i], images[j]) for i, j in zip(a, b)])
    kappa = float(jumps.max()) if jumps.size else 0.0
    rng = np.random.default_rng(seed)
    failures = []
    checked = 0
    for _ in range(samples):
        target = f.codomain.random_location(rng)
        d = f.codomain.geodesic_matrix(images, [target])[:, 0]
        checked += 1
        n = grid.components(d <= kappa)
        if n > 1:
            failures.append({"target": target.to_dict(), "components": n})
            break
    report = VerificationReport(
        name="monotone",
        passed=not failures,
        checked=checked,
        failures=failures,
        details={"grid_spacing": spacing, "image_jump": kappa, "map": f.name},
    )
    logger.debug(f"verify_monotone({f.name}): passed={report.passed}")
    return report


# ─── File format ──────────────────────────────────────────

@dataclass
class DendriteFile:
    complex: DendriteComplex
    labels: Dict[str, List[Location]] = field(default_factory=dict)
    map_description: Optional[Dict[str, Any]] = None


def dump_dendrite(
    cx: DendriteComplex,
    labels: Optional[Dict[str, Sequence[Location]]] = None,
    map_description: Optional[Dict[str, Any]] = None,
) -> str:
    """
    Serialize a complex. Schema::

        {"schema": "shadowlab.dendrite/1",
         "vertices": [0, 1, ...],
         "edges": [[v1, v2, length], ...],
         "labels": {"p": [[edge, t]], "D": [[edge, t], ...]},
         "map": {"builder": ..., "params": {...}}}   # optional
    """
    doc: Dict[str, Any] = {
        "schema": DENDRITE_SCHEMA,
        "vertices": list(range(cx.n_vertices)),
        "edges": [[e.u, e.v, e.length] for e in cx.edges],
        "labels": {
            name: [[loc.edge, loc.t] for loc in locs]
            for name, locs in sorted((labels or {}).items())
        },
    }
    if map_description is not None:
        doc["map"] = map_description
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_dendrite(path: Union[str, Path], cx: DendriteComplex, labels=None, map_description=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_dendrite(cx, labels, map_description), encoding="utf-8")
    logger.info(f"Saved dendrite ({cx.n_vertices} vertices) to {path}")
    return path


def parse_dendrite(text: str) -> DendriteFile:
    doc = json.loads(text)
    if doc.get("schema") != DENDRITE_SCHEMA:
        raise DomainError("unknown dendrite schema", {"schema": doc.get("schema")})
    vertices = doc["vertices"]
    if vertices != list(range(len(vertices))):
        raise DomainError("vertex ids must be 0..V-1")
    cx = DendriteComplex.from_edges(len(vertices), [(u, v, l) for u, v, l in doc["edges"]])
    labels = {
        name: [cx.canonical(Location(int(e), float(t))) for e, t in locs]
        for name, locs in doc.get("labels", {}).items()
    }
    return DendriteFile(cx, labels, doc.get("map"))


def load_dendrite(path: Union[str, Path]) -> DendriteFile:
    return parse_dendrite(Path(path).read_text(encoding="utf-8"))

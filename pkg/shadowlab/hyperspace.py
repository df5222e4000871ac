"""
SHADOWLAB Hyperspace Shadowing
Dynamics of the induced map on subcontinua: continuum pseudo-orbits, open
connected covers with a measured Lebesgue number, fattening, and the
backward-intersection construction of a shadowing continuum.

Enhanced with:
- singledispatch image/distance so other continuum types plug in
- Chunked, vectorized Lebesgue-number measurement in the space metric
- Sampling budgets recorded next to every Hausdorff verdict
- Leaf-set exhaustive oracle, complete over grid-spanned subtrees
- δ derived from the Lebesgue number and the continuity modulus of f
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shadowlab.constructions import DynamicalSystem
from shadowlab.core.errors import ContractError, DomainError, InvariantViolation
from shadowlab.core.metrics import metrics_manager
from shadowlab.core.structs import ShadowReport, Verdict, jsonable
from shadowlab.dendrite import (
    DendriteComplex,
    DendriteMap,
    Location,
    Subtree,
    complex_of,
    connected_span,
    distance_to_subtree,
    image_subtree,
    make_subtree,
    preimage_subtree,
    subtree_intersection,
    subtree_union,
)
from shadowlab.metric import hausdorff_points

logger = logging.getLogger("shadowlab.hyperspace")

COVER_RADIUS_FACTOR = 0.9 / 8.0
LEBESGUE_ROWS = 256
CONTAINMENT_TOL = 1e-9
CONTINUITY_SLACK = 3.0
THRESHOLD_SCHEDULE = 30
ORACLE_CANDIDATE_LIMIT = 20_000


# ─── Induced map and distances ────────────────────────────

def _dendrite_map(system: DynamicalSystem, cx: DendriteComplex) -> DendriteMap:
    cache = system.__dict__.setdefault("_dendrite_maps", {})
    if id(cx) not in cache:
        cache[id(cx)] = system.dendrite_map(cx)
    return cache[id(cx)]


@singledispatch
def induced_image(K: Any, system: DynamicalSystem) -> Any:
    """C(f)(K) = f(K)."""
    raise DomainError(f"no induced map for {type(K).__name__}")


@induced_image.register
def _(K: Subtree, system: DynamicalSystem) -> Subtree:
    return image_subtree(_dendrite_map(system, K.complex), K)


@singledispatch
def continuum_distance(A: Any, B: Any, system: DynamicalSystem, spacing: float) -> float:
    """Sampled Hausdorff distance between two continua of the same kind."""
    raise DomainError(f"no continuum distance for {type(A).__name__}")


@continuum_distance.register
def _(A: Subtree, B: Subtree, system: DynamicalSystem, spacing: float) -> float:
    return hausdorff_subtrees(A, B, spacing)


def hausdorff_subtrees(A: Subtree, B: Subtree, spacing: float) -> float:
    """
    d_H(A, B) from samples spaced ≤ ``spacing`` along both subtrees; off by at
    most ``spacing``. Complexes without a space use the geodesic metric.
    """
    if A == B:
        return 0.0
    cx = A.complex
    la, lb = cx.sample_subtree(A, spacing), cx.sample_subtree(B, spacing)
    if cx.space is None:
        d = cx.geodesic_matrix(la, lb)
        return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
    return hausdorff_points(cx.space, cx.points(la), cx.points(lb))


# ─── Continuum pseudo-orbits ──────────────────────────────

@dataclass(frozen=True)
class ContinuumPseudoOrbit:
    """K₀ … K_N with d_H(f(K_k), K_{k+1}) < δ, measured within the sampling ``spacing``."""
    continua: Tuple[Any, ...]
    delta: float
    system: DynamicalSystem = field(compare=False, repr=False)
    spacing: float = 0.005
    jumps: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.continua:
            raise DomainError("continuum pseudo-orbit needs at least one continuum")
        jumps = []
        for k, (a, b) in enumerate(zip(self.continua, self.continua[1:])):
            image = induced_image(a, self.system)
            d = 0.0 if image == b else continuum_distance(image, b, self.system, self.spacing)
            ok = d < self.delta + self.spacing if self.delta > 0 else d <= self.spacing
            if not ok:
                raise DomainError("continuum jump exceeds δ", {"step": k, "jump": d, "delta": self.delta})
            jumps.append(d)
        object.__setattr__(self, "jumps", tuple(jumps))

    def __len__(self) -> int:
        return len(self.continua)

    @property
    def n_steps(self) -> int:
        return len(self.continua) - 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "spacing": self.spacing,
            "jumps": list(self.jumps),
            "continua": [jsonable(K) for K in self.continua],
        }


def perturb_subtree(K: Subtree, radius: float, rng: np.random.Generator) -> Subtree:
    """
    A subtree within Hausdorff distance ``radius`` of K: grow a ball at an
    end, pull one end inward, or move a degenerate point.
    """
    cx = K.complex
    if radius <= 0.0:
        return K
    ends = K.endpoints()
    rho = float(rng.uniform(0.0, radius))
    end = ends[int(rng.integers(len(ends)))]
    if K.is_point():
        moved = cx.walk(end, cx.random_location(rng), rho)
        return make_subtree(cx, [(moved.edge, moved.t, moved.t)])
    mode = int(rng.integers(2))
    if mode == 0:
        return subtree_union(K, cx.ball(end, rho))
    others = [e for e in ends if e != end]
    if not others:
        return K
    moved = cx.walk(end, others[0], rho)
    return connected_span(cx, others + [moved])


def generate_continuum_pseudo_orbit(
    system: DynamicalSystem,
    K0: Subtree,
    delta: float,
    N: int,
    rng: Optional[np.random.Generator] = None,
    spacing: Optional[float] = None,
) -> ContinuumPseudoOrbit:
    """
    K_{k+1} is f(K_k) with an end grown, pulled in or moved by less than
    0.45·δ, so consecutive jumps stay below δ.
    """
    if delta < 0:
        raise DomainError("δ must be nonnegative", {"delta": delta})
    if N < 1:
        raise DomainError("pseudo-orbit needs N ≥ 1", {"N": N})
    rng = rng or np.random.default_rng(0)
    spacing = spacing or (max(delta / 4.0, 1e-3) if delta > 0 else 1e-3)
    continua = [K0]
    for _ in range(N):
        image = induced_image(continua[-1], system)
        continua.append(perturb_subtree(image, 0.45 * delta, rng))
    metrics_manager.record_pseudo_orbit("continuum")
    return ContinuumPseudoOrbit(tuple(continua), float(delta), system, spacing)


# ─── Cover and fattening ──────────────────────────────────

@dataclass
class ConnectedCover:
    """
    Open geodesic balls B(c, ρ) around centres spaced ρ/2 on every edge,
    ρ = 0.9·ε/8 (diameter < ε/4), with the Lebesgue number measured on a grid
    of spacing ρ/8 in the space metric.
    """
    complex: DendriteComplex
    epsilon: float
    radius: float
    centers: List[Location]
    lebesgue: float
    grid_spacing: float

    def __len__(self) -> int:
        return len(self.centers)

    def element(self, i: int) -> Subtree:
        """Closure of the i-th element."""
        return self.complex.ball(self.centers[i], self.radius)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "radius": self.radius,
            "elements": len(self.centers),
            "lebesgue": self.lebesgue,
            "grid_spacing": self.grid_spacing,
        }


def _space_pairwise(cx: DendriteComplex, A: Sequence[Location], B: Sequence[Location]) -> np.ndarray:
    if cx.space is None:
        return cx.geodesic_matrix(A, B)
    return cx.space.pairwise(cx.points(A), cx.points(B))


def connected_cover(cx: DendriteComplex, eps: float) -> ConnectedCover:
    """
    Cover of the complex by open connected sets of diameter < ε/4 and its
    Lebesgue number ε′: λ(x) is the largest, over elements g ∋ x, of the
    distance from x to the grid outside g; ε′ = min λ − spacing.
    """
    if not eps > 0:
        raise DomainError("ε must be positive", {"eps": eps})
    rho = COVER_RADIUS_FACTOR * eps
    centers = list(cx.fine_grid(rho / 2.0).locations)
    spacing = rho / 8.0
    grid = list(cx.fine_grid(spacing).locations)
    G = len(grid)

    geo = np.empty((G, len(centers)))
    for start in range(0, G, LEBESGUE_ROWS):
        geo[start:start + LEBESGUE_ROWS] = cx.geodesic_matrix(grid[start:start + LEBESGUE_ROWS], centers)
    member = geo < rho
    slots = int(member.sum(axis=1).max())
    cand = np.full((G, slots), -1, dtype=np.int64)
    for i in range(G):
        ids = np.flatnonzero(member[i])
        cand[i, :ids.size] = ids

    lam = np.zeros(G)
    for start in range(0, G, LEBESGUE_ROWS):
        rows = slice(start, min(G, start + LEBESGUE_ROWS))
        D = _space_pairwise(cx, grid[rows], grid)
        best = np.zeros(D.shape[0])
        for k in range(slots):
            ids = cand[rows, k]
            valid = ids >= 0
            outside = ~member[:, np.where(valid, ids, 0)].T
            vals = np.where(outside, D, np.inf).min(axis=1)
            vals = np.where(np.isinf(vals), cx.tree_diameter(), vals)
            best = np.maximum(best, np.where(valid, vals, 0.0))
        lam[rows] = best
    lebesgue = float(lam.min()) - spacing
    if lebesgue <= 0.0:
        raise ContractError("cover has no positive Lebesgue number at this resolution", {"eps": eps})
    logger.debug(f"connected_cover(ε={eps}): {len(centers)} elements, ε′={lebesgue:.4g}")
    return ConnectedCover(cx, float(eps), rho, centers, lebesgue, spacing)


def fatten(K: Subtree, cover: ConnectedCover) -> Subtree:
    """Closure of the union of K with every cover element meeting K."""
    cx = cover.complex
    if K.complex is not cx:
        raise DomainError("subtree and cover live on different complexes")
    d = distance_to_subtree(cx, cover.centers, K)
    intervals = list(K.intervals)
    for i in np.flatnonzero(d < cover.radius):
        intervals.extend(cover.element(int(i)).intervals)
    L = make_subtree(cx, intervals)
    if not L.is_connected():
        raise InvariantViolation("fattened continuum is disconnected", {"intervals": L.to_list()})
    return L


# ─── Shadowing continuum ──────────────────────────────────

@dataclass
class ContinuumShadowResult:
    """Outcome of the constructive continuum shadower."""
    continuum: Optional[Subtree]
    report: ShadowReport
    anchors: int
    cover: ConnectedCover

    @property
    def shadowed(self) -> bool:
        return self.continuum is not None and self.report.shadowed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "continuum": jsonable(self.continuum),
            "anchors": self.anchors,
            "cover": self.cover.to_dict(),
            "report": self.report.to_dict(),
        }


def _anchor_mask(system: DynamicalSystem, cx: DendriteComplex, grid: List[Location],
                 cpo: ContinuumPseudoOrbit, radius: float, spacing: float) -> np.ndarray:
    """Grid points a with d(fⁿ(a), K_n) < radius for every n."""
    space = cx.space
    pts = cx.points(grid)
    alive = np.ones(len(pts), dtype=bool)
    for n, K in enumerate(cpo.continua):
        if n > 0:
            pts = [system.step(p) if ok else p for p, ok in zip(pts, alive)]
        samples = cx.points(cx.sample_subtree(K, spacing))
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        d = space.pairwise([pts[i] for i in idx], samples).min(axis=1)
        alive[idx[d >= radius]] = False
    return alive


def _not_shadowed(cpo: ContinuumPseudoOrbit, eps: float, cover: ConnectedCover, anchors: int,
                  reason: str, **details: Any) -> ContinuumShadowResult:
    report = ShadowReport(Verdict.NOT_SHADOWED_IN_FAMILY, eps, cpo.delta, cpo.n_steps, "continuum",
                          error_budget={"lebesgue": cover.lebesgue},
                          details={"reason": reason, "anchors": anchors, **details})
    metrics_manager.record_shadow_check("continuum", report.verdict.value)
    logger.info(f"continuum_shadow gave up: {reason}")
    return ContinuumShadowResult(None, report, anchors, cover)


def continuum_shadow(
    system: DynamicalSystem,
    cpo: ContinuumPseudoOrbit,
    eps: float,
    cover: Optional[ConnectedCover] = None,
) -> ContinuumShadowResult:
    """
    K = ⋂_{n ≤ N} f⁻ⁿ(L_n), L_n the fattening of K_n, computed backwards as
    M_N = L_N, M_n = L_n ∩ f⁻¹(M_{n+1}). The anchor set A of grid points
    whose orbits stay ε′-close to the K_n must lie in K.

    When δ is too large for ε the construction can break down (no anchors,
    an empty preimage or intersection, anchors outside K, or a K that fails
    verification). That is reported as a non-shadowed result carrying the
    reason, never raised.
    """
    if not system.is_monotone:
        raise ContractError("continuum shadowing needs a monotone map", {"system": system.name})
    K0 = cpo.continua[0]
    if not isinstance(K0, Subtree):
        raise DomainError("continuum_shadow works on subtrees")
    cx = K0.complex
    cover = cover or connected_cover(cx, eps)
    f = _dendrite_map(system, cx)

    grid = list(cx.fine_grid(cover.grid_spacing).locations)
    mask = _anchor_mask(system, cx, grid, cpo, cover.lebesgue, cover.grid_spacing / 2.0)
    anchors = [loc for loc, ok in zip(grid, mask) if ok]
    if not anchors:
        return _not_shadowed(cpo, eps, cover, 0, "empty anchor set: δ too large for ε at this resolution")

    M = fatten(cpo.continua[-1], cover)
    for step in range(cpo.n_steps - 1, -1, -1):
        pre = preimage_subtree(f, M)
        if pre is None:
            return _not_shadowed(cpo, eps, cover, len(anchors), "preimage of a fattened continuum is empty",
                                 step=step)
        M = subtree_intersection(fatten(cpo.continua[step], cover), pre)
        if M is None:
            return _not_shadowed(cpo, eps, cover, len(anchors), "shadowing intersection became empty",
                                 step=step)
    K = M

    gap = float(distance_to_subtree(cx, anchors, K).max())
    if gap > CONTAINMENT_TOL:
        return _not_shadowed(cpo, eps, cover, len(anchors), "anchor set escapes the shadowing continuum",
                             gap=gap)
    report = verify_continuum_shadow(system, K, cpo, eps)
    report.details.update({"anchors": len(anchors), "lebesgue": cover.lebesgue})
    if not report.shadowed:
        report.details["reason"] = "constructed continuum does not shadow"
        logger.info(f"continuum_shadow: constructed continuum misses by {report.max_distance:.4g}")
        return ContinuumShadowResult(None, report, len(anchors), cover)
    logger.debug(f"continuum_shadow: {len(anchors)} anchors, max d_H {report.max_distance:.4g}")
    return ContinuumShadowResult(K, report, len(anchors), cover)


def verify_continuum_shadow(
    system: DynamicalSystem,
    K: Any,
    cpo: ContinuumPseudoOrbit,
    eps: float,
    spacing: Optional[float] = None,
) -> ShadowReport:
    """Step-wise Hausdorff comparison of the exact C(f)-orbit of K with the pseudo-orbit."""
    spacing = spacing or cpo.spacing
    distances = []
    current = K
    for n, K_n in enumerate(cpo.continua):
        if n > 0:
            current = induced_image(current, system)
        distances.append(0.0 if current == K_n else continuum_distance(current, K_n, system, spacing))
    ok = max(distances) < eps
    verdict = Verdict.SHADOWED if ok else Verdict.NOT_SHADOWED_IN_FAMILY
    metrics_manager.record_shadow_check("continuum-verify", verdict.value)
    return ShadowReport(verdict, eps, cpo.delta, cpo.n_steps, "continuum", distances, witness=K,
                        error_budget={"sampling": spacing})


# ─── Threshold ────────────────────────────────────────────

def map_modulus(system: DynamicalSystem, cx: DendriteComplex, scale: float) -> float:
    """
    Upper estimate of ω_f(scale) = sup{d(f(x), f(y)) : d(x, y) ≤ scale}.

    Measured as the largest image jump across cells of the grid at spacing
    ``scale``; a set of diameter ≤ scale inside one edge meets at most three
    consecutive cells, hence the factor CONTINUITY_SLACK.
    """
    space = cx.space
    if space is None:
        raise DomainError("map_modulus needs a complex with a space")
    grid = cx.fine_grid(scale)
    images = [system.step(p) for p in cx.points(list(grid.locations))]
    jumps = [space.distance(images[i], images[j]) for i, j in grid.pairs]
    return CONTINUITY_SLACK * float(max(jumps, default=0.0))


def continuum_threshold(
    system: DynamicalSystem,
    eps: float,
    cx: Optional[DendriteComplex] = None,
    cover: Optional[ConnectedCover] = None,
) -> Dict[str, float]:
    """
    δ for continuum shadowing at ε.

    With ε′ the Lebesgue number of the ε/4 cover, δ is the first value in
    ε′/2, ε′/4, … with δ + ω_f(δ) < ε′: a δ-jump followed by one application
    of f then moves no point of a continuum out of an ε′-ball, so each
    perturbation and its image stay inside a single cover element.
    """
    if cover is None:
        cover = connected_cover(cx or complex_of(system.space), eps)
    cx = cover.complex
    target = cover.lebesgue
    delta = 0.5 * target
    for _ in range(THRESHOLD_SCHEDULE):
        modulus = map_modulus(system, cx, delta)
        if delta + modulus < target:
            break
        delta *= 0.5
    else:
        raise ContractError("no δ in the schedule keeps δ + ω_f(δ) below the Lebesgue number",
                            {"eps": eps, "lebesgue": target, "last_delta": delta})
    logger.debug(f"continuum_threshold(ε={eps}): ε′={target:.4g}, δ={delta:.4g}, ω_f(δ)={modulus:.4g}")
    return {
        "epsilon": eps,
        "cover_radius": cover.radius,
        "lebesgue": target,
        "modulus": modulus,
        "delta": delta,
    }


# ─── Exhaustive oracle ────────────────────────────────────

def _leaf_sets(per_edge: List[List[Location]]):
    for options in per_edge:
        for k, a in enumerate(options):
            yield (a,)
            for b in options[k + 1:]:
                yield (a, b)
    for choice in itertools.product(*[[None] + options for options in per_edge]):
        chosen = tuple(c for c in choice if c is not None)
        if len(chosen) > 1:
            yield chosen


def exhaustive_continuum_oracle(
    system: DynamicalSystem,
    cpo: ContinuumPseudoOrbit,
    eps: float,
    spacing: float = 0.02,
) -> Tuple[bool, Optional[Subtree]]:
    """
    Search every subtree spanned by grid points (spacing ``spacing``) for
    one that ε-shadows the pseudo-orbit.

    A shadowing subtree lies within ε of K₀, so its leaves are among the grid
    points within ε of K₀. A subtree is the span of its leaves, and unless it
    sits inside one edge no edge holds two of its leaves (the arc between
    them would be the whole subtree). Enumerating pairs within each edge and
    at most one point per edge therefore reaches every candidate. Raises
    ContractError when that count exceeds ORACLE_CANDIDATE_LIMIT.
    """
    K0 = cpo.continua[0]
    cx = K0.complex
    grid = list(cx.fine_grid(spacing).locations)
    near = _space_pairwise(cx, grid, cx.sample_subtree(K0, spacing / 2.0)).min(axis=1) < eps
    per_edge: Dict[int, List[Location]] = {}
    for loc in itertools.compress(grid, near):
        per_edge.setdefault(loc.edge, []).append(loc)
    groups = list(per_edge.values())
    count = math.prod(1 + len(g) for g in groups) + sum(len(g) * (len(g) + 1) // 2 for g in groups)
    if count > ORACLE_CANDIDATE_LIMIT:
        raise ContractError("oracle instance too large", {"leaf_sets": count, "limit": ORACLE_CANDIDATE_LIMIT})

    seen = set()
    for leaves in _leaf_sets(groups):
        candidate = connected_span(cx, list(leaves))
        if candidate in seen:
            continue
        seen.add(candidate)
        if continuum_distance(candidate, K0, system, cpo.spacing) >= eps:
            continue
        if verify_continuum_shadow(system, candidate, cpo, eps).shadowed:
            logger.debug(f"oracle: witness after {len(seen)} of at most {count} candidates")
            return True, candidate
    return False, None

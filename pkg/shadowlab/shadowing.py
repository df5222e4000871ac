"""
SHADOWLAB Point Shadowing
Pseudo-orbit generation and validation, shadow verification, the brute-force
net oracle, the constructive shadower for simple systems and empirical
shadowing-modulus estimation.

Enhanced with:
- Two-sided pseudo-orbit windows for homeomorphisms
- Vectorized net search for interval maps
- Grid-estimated continuity moduli with recorded slack
- Per-trial RNG streams split from one master seed
- CSV/JSON serialization of pseudo-orbits and reports
"""

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shadowlab.constructions import DynamicalSystem, SimpleSystem, sample_points
from shadowlab.core.errors import ContractError, DomainError, InvariantViolation
from shadowlab.core.metrics import metrics_manager
from shadowlab.core.structs import ShadowReport, SpaceKind, Verdict, jsonable
from shadowlab.dendrite import FineGrid, Location, complex_of
from shadowlab.metric import FinitePointSet, Point, SpaceHandle, build_eps_net

logger = logging.getLogger("shadowlab.shadowing")

MAX_SAMPLE_ATTEMPTS = 1000


# ─── Pseudo-orbits ────────────────────────────────────────

@dataclass(frozen=True)
class PseudoOrbit:
    """
    x_{−origin} … x_{N−origin} with d(f(x_k), x_{k+1}) < δ (≤ 0 when δ = 0).
    ``origin`` is the index of x₀; one-sided orbits have origin 0.
    """
    points: Tuple[Point, ...]
    delta: float
    system: DynamicalSystem = field(compare=False, repr=False)
    origin: int = 0
    gaps: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.points) < 1:
            raise DomainError("pseudo-orbit needs at least one point")
        if not 0 <= self.origin < len(self.points):
            raise DomainError("origin outside the pseudo-orbit", {"origin": self.origin})
        space = self.system.space
        gaps = tuple(
            space.distance(self.system.step(a), b) for a, b in zip(self.points, self.points[1:])
        )
        for k, g in enumerate(gaps):
            ok = g < self.delta if self.delta > 0 else g == 0.0
            if not ok:
                raise DomainError("jump exceeds δ", {"step": k, "gap": g, "delta": self.delta})
        object.__setattr__(self, "gaps", gaps)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def steps(self) -> range:
        """Time indices n of the stored points."""
        return range(-self.origin, len(self.points) - self.origin)

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    @property
    def max_gap(self) -> float:
        return max(self.gaps, default=0.0)

    def at(self, n: int) -> Point:
        return self.points[n + self.origin]


def sample_ball(space: SpaceHandle, center: Point, radius: float, rng: np.random.Generator) -> Point:
    """
    A point of the open ball B(center, radius): uniform on intervals, by area
    on the torus and by arc length on the geodesic ball of dendrite spaces.
    """
    if radius <= 0.0:
        return center
    if space.kind is SpaceKind.INTERVAL:
        lo, hi = max(space.lo, center - radius), min(space.hi, center + radius)
        for _ in range(MAX_SAMPLE_ATTEMPTS):
            x = float(rng.uniform(lo, hi))
            if abs(x - center) < radius:
                return x
        return center
    if space.kind is SpaceKind.TORUS:
        rho = radius * math.sqrt(float(rng.uniform()))
        theta = float(rng.uniform(0.0, 2.0 * math.pi))
        return space.canonical((center[0] + rho * math.cos(theta), center[1] + rho * math.sin(theta)))
    if space.retract(center) != center:
        return _sample_carrier(space, center, radius, rng)
    cx = complex_of(space)
    ball = cx.ball(cx.locate(center), radius)
    pieces = [(e, t0, t1) for e, t0, t1 in ball.intervals if t1 > t0]
    if not pieces:
        return center
    weights = np.array([(t1 - t0) * cx.edges[e].length for e, t0, t1 in pieces])
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        e, t0, t1 = pieces[int(rng.choice(len(pieces), p=weights / weights.sum()))]
        p = cx.point(Location(e, float(rng.uniform(t0, t1))))
        if space.distance(center, p) < radius:
            return p
    return center


def _sample_carrier(space: SpaceHandle, center: Point, radius: float, rng: np.random.Generator) -> Point:
    """A ball point on the arc carrying ``center``, for points off the materialized complex."""
    key, s = space.carrier(center)
    span = radius / space.arc_length(key)
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        p = space.point_on(key, min(max(s + float(rng.uniform(-span, span)), 0.0), 1.0))
        if space.distance(center, p) < radius:
            return p
    return center


def _drift(space: SpaceHandle, y: Point, step: float, target: Optional[Point]) -> Point:
    """Move ``step`` from y: rightwards on intervals and the torus, toward ``target`` on trees."""
    if space.kind is SpaceKind.INTERVAL:
        return min(y + step, space.hi)
    if space.kind is SpaceKind.TORUS:
        return space.canonical((y[0] + step, y[1]))
    cx = complex_of(space)
    if target is None:
        leaves = cx.leaves()
        target = cx.point(cx.vertex_location(leaves[-1]))
    return cx.point(cx.walk(cx.locate(y), cx.locate(target), step))


def generate_pseudo_orbit(
    system: DynamicalSystem,
    x0: Point,
    delta: float,
    N: int,
    rng: Optional[np.random.Generator] = None,
    mode: str = "uniform",
    target: Optional[Point] = None,
    two_sided: bool = False,
) -> PseudoOrbit:
    """
    A δ-pseudo-orbit of length N + 1 from x₀.

    ``uniform`` draws x_{k+1} from the δ/2-ball around f(x_k); ``drift`` moves
    f(x_k) by exactly δ/2 (rightwards, or toward ``target`` on trees).
    ``two_sided`` also builds N points before x₀ through the inverse map.
    """
    if delta < 0:
        raise DomainError("δ must be nonnegative", {"delta": delta})
    if N < 1:
        raise DomainError("pseudo-orbit needs N ≥ 1", {"N": N})
    if mode not in ("uniform", "drift"):
        raise DomainError("unknown pseudo-orbit mode", {"mode": mode})
    space = system.space
    rng = rng or np.random.default_rng(0)
    half = delta / 2.0

    def perturb(y: Point) -> Point:
        if delta == 0:
            return y
        if mode == "drift":
            return _drift(space, y, half, target)
        return sample_ball(space, y, half, rng)

    forward = [space.canonical(x0)]
    for _ in range(N):
        forward.append(perturb(system.step(forward[-1])))
    backward: List[Point] = []
    if two_sided:
        x = forward[0]
        for _ in range(N):
            # choose x_{k−1} = f⁻¹(z) with d(z, x_k) < δ/2
            x = system.step_back(sample_ball(space, x, half, rng) if delta > 0 else x)
            backward.append(x)
    points = tuple(backward[::-1] + forward)
    metrics_manager.record_pseudo_orbit(mode)
    return PseudoOrbit(points, float(delta), system, origin=len(backward))


def true_orbit(system: DynamicalSystem, x0: Point, N: int) -> PseudoOrbit:
    return PseudoOrbit(tuple(system.orbit(system.space.canonical(x0), N)), 0.0, system)


# ─── Verification ─────────────────────────────────────────

def shadow_distances(system: DynamicalSystem, y: Point, po: PseudoOrbit, stop_above: Optional[float] = None) -> List[float]:
    """d(fⁿ(y), x_n) over the pseudo-orbit's time range; truncated once a distance reaches ``stop_above``."""
    space = system.space
    y = space.canonical(y)
    out: Dict[int, float] = {}
    z = y
    for n in range(0, len(po.points) - po.origin):
        if n > 0:
            z = system.step(z)
        d = space.distance(z, po.at(n))
        out[n] = d
        if stop_above is not None and d >= stop_above:
            return [out[k] for k in sorted(out)]
    z = y
    for n in range(-1, -po.origin - 1, -1):
        z = system.step_back(z)
        d = space.distance(z, po.at(n))
        out[n] = d
        if stop_above is not None and d >= stop_above:
            break
    return [out[k] for k in sorted(out)]


def verify_shadow(system: DynamicalSystem, y: Point, po: PseudoOrbit, eps: float) -> ShadowReport:
    """Does the exact orbit of y stay ε-close to the pseudo-orbit at every step?"""
    distances = shadow_distances(system, y, po)
    ok = max(distances) < eps
    verdict = Verdict.SHADOWED if ok else Verdict.NOT_SHADOWED_IN_FAMILY
    metrics_manager.record_shadow_check("verify", verdict.value)
    return ShadowReport(verdict, eps, po.delta, po.n_steps, "verify", distances, witness=y)


# ─── Brute-force oracle ───────────────────────────────────

def _lipschitz_budget(system: DynamicalSystem, steps: int) -> Optional[float]:
    bound = getattr(system.map, "lipschitz_bound", None)
    if bound is None:
        return None
    L = bound()
    if not math.isfinite(L):
        return None
    try:
        return float(L ** steps)
    except OverflowError:
        return math.inf


def _vectorized_net_hit(system: DynamicalSystem, po: PseudoOrbit, candidates: np.ndarray, eps: float) -> Optional[int]:
    """First candidate index whose forward orbit ε-shadows a one-sided interval pseudo-orbit."""
    X = candidates.astype(float)
    alive = np.abs(X - po.points[0]) < eps
    for x_n in po.points[1:]:
        X = system.map.apply_array(X)
        alive &= np.abs(X - x_n) < eps
        if not alive.any():
            return None
    hits = np.flatnonzero(alive)
    return int(hits[0]) if hits.size else None


def search_shadow_point(
    system: DynamicalSystem,
    po: PseudoOrbit,
    eps: float,
    net: Optional[FinitePointSet] = None,
) -> ShadowReport:
    """
    Exhaustive ε/2-net search, lowest net index first; homeomorphisms then
    try the pull-backs f⁻ⁿ(x_n). A net-only failure certifies that no point
    (ε − mesh·L)-shadows the orbit, L being the Lipschitz budget over N steps.
    """
    net = net or build_eps_net(system.space, eps / 2.0)
    if net.mesh > eps / 2.0:
        raise ContractError("net mesh must be at most ε/2", {"mesh": net.mesh, "eps": eps})
    start = time.monotonic()
    L = _lipschitz_budget(system, po.n_steps)
    budget: Dict[str, Any] = {"mesh": net.mesh, "lipschitz": L}
    budget["certified_radius"] = None if L is None or not math.isfinite(L) else eps - net.mesh * L

    hit: Optional[int] = None
    checked = 0
    interval_fast = (
        system.space.kind is SpaceKind.INTERVAL
        and po.origin == 0
        and hasattr(system.map, "apply_array")
        and not system.retract
    )
    if interval_fast:
        hit = _vectorized_net_hit(system, po, np.asarray(net.points, dtype=float), eps)
        checked = len(net) if hit is None else hit + 1
    else:
        for i, y in enumerate(net.points):
            checked += 1
            if max(shadow_distances(system, y, po, stop_above=eps)) < eps:
                hit = i
                break

    method = "net-search"
    witness = net.points[hit] if hit is not None else None
    if witness is None:
        candidates = [po.at(0)]
        if system.is_homeomorphism:
            candidates += [system.iterate(po.at(n), -n) for n in po.steps if n > 0]
        for y in candidates:
            checked += 1
            if max(shadow_distances(system, y, po, stop_above=eps)) < eps:
                witness, method = y, "pull-back"
                break

    if witness is None:
        report = ShadowReport(Verdict.NOT_SHADOWED_IN_FAMILY, eps, po.delta, po.n_steps, "net-search",
                              error_budget=budget, details={"candidates": checked})
    else:
        report = verify_shadow(system, witness, po, eps)
        if not report.shadowed:
            raise InvariantViolation("oracle witness failed verification", {"witness": repr(witness)})
        report.method = method
        report.error_budget = budget
        report.details = {"candidates": checked, "net_index": hit}
    metrics_manager.record_shadow_check(report.method, report.verdict.value)
    logger.debug(f"search_shadow_point: {report.verdict.value} after {checked} candidates "
                 f"({time.monotonic() - start:.3f}s)")
    return report


# ─── Constructive shadower for simple systems ─────────────

MODULUS_SLACK = 2.0
DELTA_SCHEDULE = 40
ESCAPE_LIMIT = 10_000


@dataclass
class ThresholdCertificate:
    """Constants of the constructive shadower at a given ε, estimated on a grid."""
    epsilon: float
    radius: float
    attractor_image_radius: float
    repeller_image_radius: float
    escape_steps: int
    eta: float
    delta: float
    grid_spacing: float
    separation: float
    moduli: List[float] = field(default_factory=list)
    inverse_modulus: float = 0.0
    exact_map: bool = False

    @property
    def forward_budget(self) -> float:
        """Σ_{i<N} ω_i(δ), the drift a δ-pseudo-orbit can build before it is trapped."""
        return float(sum(self.moduli))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "radius": self.radius,
            "attractor_image_radius": self.attractor_image_radius,
            "repeller_image_radius": self.repeller_image_radius,
            "escape_steps": self.escape_steps,
            "eta": self.eta,
            "delta": self.delta,
            "grid_spacing": self.grid_spacing,
            "separation": self.separation,
            "moduli": list(self.moduli),
            "forward_budget": self.forward_budget,
            "inverse_modulus": self.inverse_modulus,
            "exact_map": self.exact_map,
        }


def _set_distance(space: SpaceHandle, points: Sequence[Point], targets: Sequence[Point]) -> np.ndarray:
    return space.pairwise(list(points), list(targets)).min(axis=1)


def _outside_repeller_preimage(system: DynamicalSystem, points: Sequence[Point], repellers: Sequence[Point],
                               radius: float) -> np.ndarray:
    """Mask of x ∉ f⁻¹(U_Q), i.e. f(x) at least ``radius`` from every repeller."""
    return _set_distance(system.space, [system.step(x) for x in points], repellers) >= radius


def _escape_steps(system: DynamicalSystem, points: Sequence[Point], attractors: Sequence[Point], radius: float) -> int:
    """Largest n over ``points`` before fⁿ(x) comes within ``radius`` of the attractors."""
    n, cur = 0, list(points)
    while cur:
        d = _set_distance(system.space, cur, attractors)
        cur = [system.step(x) for x, dx in zip(cur, d) if dx >= radius]
        if cur:
            n += 1
            if n > ESCAPE_LIMIT:
                raise ContractError("orbits do not reach the attractors", {"remaining": len(cur), "steps": n})
    return n


def _cell_slopes(system: DynamicalSystem, fine: FineGrid, steps: int) -> Tuple[List[float], float]:
    """Largest image jump per unit cell length of fⁱ (i < steps) and of f⁻¹ over the grid cells."""
    cx, space = fine.complex, system.space
    locs = fine.locations
    a, b = fine.pairs[:, 0], fine.pairs[:, 1]
    lengths = [cx.geodesic(locs[p], locs[q]) for p, q in zip(a, b)]
    cur = cx.points(locs)
    back = [system.step_back(x) for x in cur]
    inverse = max(space.distance(back[p], back[q]) / ell for p, q, ell in zip(a, b, lengths))
    slopes = []
    for i in range(steps):
        slopes.append(float(max(space.distance(cur[p], cur[q]) / ell for p, q, ell in zip(a, b, lengths))))
        if i + 1 < steps:
            cur = [system.step(x) for x in cur]
    return slopes, float(inverse)


def _scale_arcs(system: DynamicalSystem, fine: FineGrid, off: Sequence[Point], scale: float) -> Tuple[List[Point], List[Point]]:
    """
    Arcs of length ``scale`` from every grid point toward each grid neighbour,
    plus arcs along the carrier of each point of ``off`` (grid images the
    exact map moves off the approximant). ``scale`` must not exceed the
    grid spacing.
    """
    cx, space = fine.complex, system.space
    locs = fine.locations
    starts: List[Point] = []
    ends: List[Point] = []
    for p, q in fine.pairs:
        for u, v in ((p, q), (q, p)):
            starts.append(cx.point(locs[u]))
            ends.append(cx.point(cx.walk(locs[u], locs[v], scale)))
    for y in off:
        key, s = space.carrier(y)
        span = scale / space.arc_length(key)
        for t in (max(s - span, 0.0), min(s + span, 1.0)):
            if t != s:
                starts.append(y)
                ends.append(space.point_on(key, t))
    return starts, ends


def _moduli_at_scale(system: DynamicalSystem, arcs: Tuple[List[Point], List[Point]], steps: int) -> Tuple[List[float], float]:
    """ω_i of fⁱ (i < steps) and ω of f⁻¹ at the arcs' scale, inflated by MODULUS_SLACK."""
    space = system.space
    starts, ends = arcs
    inverse = max(space.distance(system.step_back(u), system.step_back(v)) for u, v in zip(starts, ends))
    moduli = []
    for i in range(steps):
        moduli.append(MODULUS_SLACK * max(space.distance(u, v) for u, v in zip(starts, ends)))
        if i + 1 < steps:
            starts = [system.step(u) for u in starts]
            ends = [system.step(v) for v in ends]
    return moduli, MODULUS_SLACK * float(inverse)


def simple_shadow_threshold(system: SimpleSystem, eps: float, grid_divisions: int = 32) -> ThresholdCertificate:
    """
    δ below which the constructive shadower applies at ε.

    U_P and U_Q are unions of open balls of radius r < ε/4 around the
    attractors and repellers with f(Ū_P) ⊂ U_P and f⁻¹(Ū_Q) ⊂ U_Q (checked on
    the grid). N bounds the time points outside U_P ∪ f⁻¹(U_Q) need to reach
    the inner half of U_P, and η is half the smallest of ε and the two
    trapping gaps. δ must satisfy Σ_{i<N} ω_i(δ) < η and ω_{−1}(δ) < η, where
    ω_i is the modulus of fⁱ at scale δ itself: the largest image distance
    over arcs of length δ from every grid point, times MODULUS_SLACK. The
    schedule starts at the guess given by grid-cell slopes and shrinks δ
    until both inequalities hold.

    Retracting approximants are certified through their exact map.
    """
    if not eps > 0:
        raise DomainError("ε must be positive", {"eps": eps})
    exact = system.exact()
    if not exact.is_homeomorphism:
        raise ContractError("constructive shadowing needs a homeomorphism", {"system": system.name})
    space = exact.space
    cx = complex_of(space)
    A, R = list(system.attractors), list(system.repellers)
    separation_ar = float(space.pairwise(A, R).min())

    r = min(0.9 * eps / 4.0, 0.45 * separation_ar)
    for _ in range(20):
        spacing = r / grid_divisions
        fine = cx.fine_grid(spacing)
        grid = cx.points(fine.locations)
        dA = _set_distance(space, grid, A)
        dR = _set_distance(space, grid, R)
        img_p = _set_distance(space, [exact.step(x) for x, d in zip(grid, dA) if d <= r], A).max()
        img_q = _set_distance(space, [exact.step_back(x) for x, d in zip(grid, dR) if d <= r], R).max()
        if img_p < r and img_q < r:
            break
        r /= 2.0
    else:
        raise ContractError("no trapping neighbourhoods found", {"eps": eps})

    outside = (dA >= r) & _outside_repeller_preimage(exact, grid, R, r)
    N = _escape_steps(exact, [x for x, m in zip(grid, outside) if m], A, r / 2.0) + 1
    gap_p, gap_q = r - float(img_p), r - float(img_q)
    eta = 0.5 * 0.99 * min(eps, gap_p, gap_q)
    separation = separation_ar - 2.0 * r

    off = [y for y in (exact.step(x) for x in grid) if space.retract(y) != y]
    slopes, inverse_slope = _cell_slopes(exact, fine, N)
    delta = min(eta, spacing, 0.99 * separation,
                eta / (MODULUS_SLACK * sum(slopes)), eta / (MODULUS_SLACK * inverse_slope))
    for _ in range(DELTA_SCHEDULE):
        moduli, inverse = _moduli_at_scale(exact, _scale_arcs(exact, fine, off, delta), N)
        total = sum(moduli)
        if total < eta and inverse < eta:
            break
        ratio = min(eta / total, eta / inverse)
        # the moduli here shrink at least like √δ
        delta *= min(0.5, 0.8 * ratio * ratio)
    else:
        raise ContractError("no δ in the schedule meets the shadowing inequality",
                            {"eps": eps, "eta": eta, "delta": delta, "escape_steps": N})

    cert = ThresholdCertificate(eps, r, float(img_p), float(img_q), N, eta, delta, spacing, separation,
                                moduli, inverse, exact_map=exact is not system)
    logger.debug(f"simple_shadow_threshold(ε={eps}): r={r:.4g} N={N} η={eta:.3g} δ={delta:.3g} "
                 f"Σω={total:.3g} ω₋₁={inverse:.3g}")
    return cert


def simple_shadow_point(
    system: SimpleSystem,
    po: PseudoOrbit,
    eps: float,
    certificate: Optional[ThresholdCertificate] = None,
) -> Point:
    """
    The shadowing point of the constructive argument: the attractor when the
    pseudo-orbit stays in U_P, the repeller when it stays in U_Q, otherwise
    f⁻ⁿ(x_n) for the least n with x_n ∉ f⁻¹(U_Q), that is d(f(x_n), Q) ≥ r.

    Retracting approximants are shadowed through their exact map, so the
    pseudo-orbit must be one for the exact map as well.
    """
    cert = certificate or simple_shadow_threshold(system, eps)
    if po.delta > cert.delta:
        raise ContractError("pseudo-orbit δ is above the shadowing threshold",
                            {"delta": po.delta, "threshold": cert.delta})
    if po.origin != 0:
        raise DomainError("constructive shadower takes one-sided pseudo-orbits")
    exact = system.exact()
    if po.system is not exact:
        po = PseudoOrbit(po.points, po.delta, exact, po.origin)
    space = exact.space
    A, R = list(system.attractors), list(system.repellers)
    r = cert.radius
    dA = space.pairwise(list(po.points), A)
    dR = space.pairwise(list(po.points), R)

    if np.all(dA.min(axis=1) < r):
        y = A[int(np.argmin(dA[0]))]
        how = "attractor"
    elif np.all(dR.min(axis=1) < r):
        y = R[int(np.argmin(dR[0]))]
        how = "repeller"
    else:
        leaving = np.flatnonzero(_outside_repeller_preimage(exact, po.points, R, r))
        if leaving.size:
            n = int(leaving[0])
            y = exact.iterate(po.points[n], -n)
            how = f"pull-back n={n}"
        else:
            y = exact.iterate(po.points[-1], -po.n_steps)
            how = "pull-back end"
    report = verify_shadow(exact, y, po, eps)
    if not report.shadowed:
        raise InvariantViolation("constructed point does not shadow", {"how": how, "max": report.max_distance})
    logger.debug(f"simple_shadow_point: {how}, max distance {report.max_distance:.3g}")
    return y


# ─── Modulus estimation ───────────────────────────────────

@dataclass
class ModulusEstimate:
    epsilon: float
    delta: Optional[float]
    generator: str
    N: int
    table: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"epsilon": self.epsilon, "delta": self.delta, "generator": self.generator,
                "N": self.N, "table": jsonable(self.table)}


def estimate_modulus(
    system: DynamicalSystem,
    eps: float,
    trials: int,
    delta_grid: Sequence[float],
    N: int,
    seed: int = 0,
    generator: str = "uniform",
    mesh: Optional[float] = None,
) -> ModulusEstimate:
    """
    Largest δ of an ascending grid at which every random pseudo-orbit is
    ε-shadowed by the oracle. The drift generator starts at the left end and
    runs N ≥ 4ε/δ steps so a non-shadowing system cannot pass.
    """
    grid = list(delta_grid)
    if grid != sorted(grid):
        raise DomainError("δ grid must be ascending", {"grid": grid})
    net = build_eps_net(system.space, mesh or eps / 2.0)
    streams = np.random.SeedSequence(seed).spawn(len(grid) * trials)
    table = []
    best: Optional[float] = None
    for gi, delta in enumerate(grid):
        steps = N if generator != "drift" or delta == 0 else max(N, math.ceil(4.0 * eps / delta))
        passed = 0
        for t in range(trials):
            rng = np.random.default_rng(streams[gi * trials + t])
            if generator == "drift" and system.space.kind is SpaceKind.INTERVAL:
                x0 = system.space.lo
            else:
                x0 = sample_points(system.space, rng, 1)[0]
            po = generate_pseudo_orbit(system, x0, delta, steps, rng, mode=generator)
            if delta == 0 or search_shadow_point(system, po, eps, net).shadowed:
                passed += 1
        table.append({"delta": delta, "trials": trials, "passed": passed, "N": steps})
        if passed == trials:
            best = delta if delta > 0 else best
    return ModulusEstimate(eps, best, generator, N, table)


# ─── Serialization ────────────────────────────────────────

def pseudo_orbit_to_csv(po: PseudoOrbit) -> str:
    """step, coordinates, gap to the next step."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    kind = po.system.space.kind
    if kind is SpaceKind.INTERVAL:
        writer.writerow(["step", "x", "gap"])
    elif kind is SpaceKind.TORUS:
        writer.writerow(["step", "x", "y", "gap"])
    else:
        writer.writerow(["step", "point", "gap"])
    for n, p in zip(po.steps, po.points):
        i = n + po.origin
        gap = repr(po.gaps[i]) if i < len(po.gaps) else ""
        if kind is SpaceKind.INTERVAL:
            coords = [repr(float(p))]
        elif kind is SpaceKind.TORUS:
            coords = [repr(float(p[0])), repr(float(p[1]))]
        else:
            coords = [json.dumps(jsonable(p))]
        writer.writerow([n, *coords, gap])
    return buf.getvalue()


def report_to_json(report: ShadowReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"

"""
SHADOWLAB Constructions
Exact builders for the dynamical systems of the lab: interval homeomorphisms,
star unions, bridge spaces, combs and the staged universal dendrites.

Enhanced with:
- Attractor/repeller bookkeeping derived from fixed-point data
- Symbolic orbit sets so comb maps stay exact on infinite tooth families
- Tooth materialization with a monotone retraction for finite approximants
- Inverse-limit threads over the built stages
- Builder registry used by the experiment harness
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

from shadowlab.core.errors import ConfigError, ContractError, DomainError
from shadowlab.core.logging_config import log_summary
from shadowlab.core.structs import HomeoVariant, Orientation, SpaceKind, VerificationReport
from shadowlab.dendrite import DendriteComplex, DendriteMap, Location, complex_of
from shadowlab.metric import (
    BridgeSpace,
    CombSpace,
    IdentityMap,
    IntervalSpace,
    Point,
    ProjectionMap,
    SpaceHandle,
    StarSpace,
    StructuralMap,
    TorusSpace,
)

logger = logging.getLogger("shadowlab.constructions")

DEFAULT_GAMMA = 1e-3
DEFAULT_STAGE_TEETH_PER_ORBIT = 1


# ─── Interval homeomorphisms ──────────────────────────────

class IntervalHomeo(StructuralMap):
    """
    Strictly monotone self-homeomorphism of [lo, hi], defined on the unit
    interval and conjugated by the affine chart.

    Variants:
      square            u ↦ u²
      three-fixed       u ↦ 2u² on [0, ½], u ↦ 1 − 2(1 − u)² on [½, 1]
      piecewise-linear  interpolation through the given breakpoints
    """

    is_monotone = True

    def __init__(
        self,
        variant: HomeoVariant,
        lo: float = 0.0,
        hi: float = 1.0,
        breakpoints: Optional[Sequence[Tuple[float, float]]] = None,
    ):
        super().__init__(IntervalSpace(lo, hi))
        self.variant = variant
        self.lo = float(lo)
        self.hi = float(hi)
        self.breakpoints: Optional[Tuple[Tuple[float, float], ...]] = None
        self.orientation = Orientation.INCREASING
        if variant is HomeoVariant.PIECEWISE_LINEAR:
            self._init_breakpoints(breakpoints)
        elif breakpoints is not None:
            raise DomainError("breakpoints only apply to piecewise-linear maps")
        self.fixed_points = self._fixed_points()

    def _init_breakpoints(self, breakpoints) -> None:
        if not breakpoints or len(breakpoints) < 2:
            raise DomainError("piecewise-linear map needs at least two breakpoints")
        pts = tuple((float(x), float(y)) for x, y in breakpoints)
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise DomainError("breakpoint abscissae must increase from 0 to 1", {"x": xs.tolist()})
        if np.all(np.diff(ys) > 0) and ys[0] == 0.0 and ys[-1] == 1.0:
            self.orientation = Orientation.INCREASING
        elif np.all(np.diff(ys) < 0) and ys[0] == 1.0 and ys[-1] == 0.0:
            self.orientation = Orientation.DECREASING
        else:
            raise DomainError("breakpoint values must be strictly monotone onto [0, 1]", {"y": ys.tolist()})
        self.breakpoints = pts
        self._xs, self._ys = xs, ys

    # Unit-interval formulas

    def _forward_unit(self, u: np.ndarray) -> np.ndarray:
        if self.variant is HomeoVariant.SQUARE:
            return u * u
        if self.variant is HomeoVariant.THREE_FIXED:
            return np.where(u <= 0.5, 2.0 * u * u, 1.0 - 2.0 * (1.0 - u) ** 2)
        return np.interp(u, self._xs, self._ys)

    def _inverse_unit(self, v: np.ndarray) -> np.ndarray:
        if self.variant is HomeoVariant.SQUARE:
            return np.sqrt(v)
        if self.variant is HomeoVariant.THREE_FIXED:
            return np.where(v <= 0.5, np.sqrt(v / 2.0), 1.0 - np.sqrt((1.0 - v) / 2.0))
        if self.orientation is Orientation.DECREASING:
            return np.interp(v, self._ys[::-1], self._xs[::-1])
        return np.interp(v, self._ys, self._xs)

    def _to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def _from_unit(self, u):
        out = self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)
        return np.clip(out, self.lo, self.hi)

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        return self._from_unit(self._forward_unit(self._to_unit(xs)))

    def inverse_array(self, xs: np.ndarray) -> np.ndarray:
        return self._from_unit(self._inverse_unit(self._to_unit(xs)))

    def __call__(self, x: float) -> float:
        width = self.hi - self.lo
        u = (x - self.lo) / width
        if self.variant is HomeoVariant.SQUARE:
            v = u * u
        elif self.variant is HomeoVariant.THREE_FIXED:
            v = 2.0 * u * u if u <= 0.5 else 1.0 - 2.0 * (1.0 - u) ** 2
        else:
            v = float(np.interp(u, self._xs, self._ys))
        return min(max(self.lo + v * width, self.lo), self.hi)

    def inverse(self, x: float) -> float:
        width = self.hi - self.lo
        v = (x - self.lo) / width
        if self.variant is HomeoVariant.SQUARE:
            u = math.sqrt(v)
        elif self.variant is HomeoVariant.THREE_FIXED:
            u = math.sqrt(v / 2.0) if v <= 0.5 else 1.0 - math.sqrt((1.0 - v) / 2.0)
        else:
            u = float(self._inverse_unit(np.array([v]))[0])
        return min(max(self.lo + u * width, self.lo), self.hi)

    def _fixed_points(self) -> Tuple[float, ...]:
        if self.variant is HomeoVariant.SQUARE:
            units = [0.0, 1.0]
        elif self.variant is HomeoVariant.THREE_FIXED:
            units = [0.0, 0.5, 1.0]
        else:
            units = []
            for (x0, y0), (x1, y1) in zip(self.breakpoints, self.breakpoints[1:]):
                g0, g1 = y0 - x0, y1 - x1
                if g0 == 0.0 and g1 == 0.0:
                    raise DomainError("a piece lies on the diagonal; fixed set is not finite", {"piece": [x0, x1]})
                if g0 == 0.0:
                    units.append(x0)
                elif g0 * g1 < 0.0:
                    units.append(x0 + g0 * (x1 - x0) / (g0 - g1))
            if self.breakpoints[-1][1] == self.breakpoints[-1][0]:
                units.append(1.0)
        return tuple(sorted({float(self._from_unit(u)) for u in units}))

    def classify_fixed_points(self) -> Tuple[List[float], List[float]]:
        """(attracting, repelling) fixed points of an increasing map."""
        if self.orientation is Orientation.DECREASING:
            raise ContractError("orientation-reversing maps have no attractor/repeller split")
        fixed = list(self.fixed_points)
        signs = []
        for a, b in zip(fixed, fixed[1:]):
            mid = 0.5 * (a + b)
            signs.append(np.sign(self(mid) - mid))
        attract, repel = [], []
        last = len(fixed) - 1
        for j, c in enumerate(fixed):
            left = signs[j - 1] if j > 0 else None
            right = signs[j] if j < last else None
            if (left is None or left > 0) and (right is None or right < 0):
                attract.append(c)
            elif (left is None or left < 0) and (right is None or right > 0):
                repel.append(c)
        return attract, repel

    def lipschitz_bound(self) -> float:
        if self.variant is HomeoVariant.SQUARE:
            return 2.0
        if self.variant is HomeoVariant.THREE_FIXED:
            return 2.0
        slopes = np.abs(np.diff(self._ys) / np.diff(self._xs))
        return float(slopes.max())

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"map": "interval-homeo", "variant": self.variant.value, "lo": self.lo, "hi": self.hi}
        if self.breakpoints is not None:
            out["breakpoints"] = [list(p) for p in self.breakpoints]
        return out

    @classmethod
    def square(cls, lo: float = 0.0, hi: float = 1.0) -> "IntervalHomeo":
        return cls(HomeoVariant.SQUARE, lo, hi)

    @classmethod
    def three_fixed(cls, lo: float = 0.0, hi: float = 1.0) -> "IntervalHomeo":
        return cls(HomeoVariant.THREE_FIXED, lo, hi)


class TentMap(StructuralMap):
    """x ↦ 1 − |2x − 1| on [0, 1]: continuous, neither injective nor monotone."""

    is_homeomorphism = False
    is_monotone = False

    def __init__(self):
        super().__init__(IntervalSpace(0.0, 1.0))

    def __call__(self, x):
        return 1.0 - abs(2.0 * x - 1.0)

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        return 1.0 - np.abs(2.0 * np.asarray(xs, dtype=float) - 1.0)

    def lipschitz_bound(self) -> float:
        return 2.0


# ─── Systems ──────────────────────────────────────────────

class DynamicalSystem:
    """A space with a self-map. ``retract`` marks finite approximants."""

    def __init__(
        self,
        space: SpaceHandle,
        map: StructuralMap,
        name: str = "",
        description: Optional[Dict[str, Any]] = None,
        retract: bool = False,
    ):
        self.space = space
        self.map = map
        self.name = name or type(map).__name__
        self.description = description or {"builder": self.name, "params": {}}
        self.retract = retract

    @property
    def is_homeomorphism(self) -> bool:
        return bool(self.map.is_homeomorphism) and not self.retract

    @property
    def is_monotone(self) -> bool:
        return bool(self.map.is_monotone)

    def step(self, x: Point) -> Point:
        y = self.map(x)
        return self.space.retract(y) if self.retract else y

    def step_back(self, x: Point) -> Point:
        if not self.is_homeomorphism:
            raise ContractError("system has no inverse", {"system": self.name})
        return self.map.inverse(x)

    def exact(self) -> "DynamicalSystem":
        """
        The same map without the retraction. Its orbits may leave the
        materialized approximant (onto collapsed comb teeth); the metric and
        the map are still exact there.
        """
        if not self.retract:
            return self
        twin = copy.copy(self)
        twin.retract = False
        return twin

    def orbit(self, x: Point, n: int) -> List[Point]:
        out = [x]
        for _ in range(n):
            out.append(self.step(out[-1]))
        return out

    def iterate(self, x: Point, n: int) -> Point:
        step = self.step if n >= 0 else self.step_back
        for _ in range(abs(n)):
            x = step(x)
        return x

    def dendrite_map(self, complex: Optional[DendriteComplex] = None) -> DendriteMap:
        """The system's map on its complex."""
        cx = complex or complex_of(self.space)
        return DendriteMap(cx, self.map, retract=self.retract, is_monotone=self.is_monotone, name=self.name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "space": self.space.describe(),
            "homeomorphism": self.is_homeomorphism,
            "monotone": self.is_monotone,
            "description": self.description,
        }


class SimpleSystem(DynamicalSystem):
    """
    A homeomorphism with a quasi-attracting fixed point p and a quasi-repelling
    fixed point q. The attractor and repeller sets generalize p and q for
    glued systems whose pieces have several such points.
    """

    def __init__(
        self,
        space: SpaceHandle,
        map: StructuralMap,
        p: Point,
        q: Point,
        attractors: Optional[Sequence[Point]] = None,
        repellers: Optional[Sequence[Point]] = None,
        name: str = "",
        description: Optional[Dict[str, Any]] = None,
        retract: bool = False,
    ):
        super().__init__(space, map, name=name, description=description, retract=retract)
        self.p = space.canonical(p)
        self.q = space.canonical(q)
        self.attractors = tuple(dict.fromkeys(space.canonical(a) for a in (attractors or (self.p,))))
        self.repellers = tuple(dict.fromkeys(space.canonical(r) for r in (repellers or (self.q,))))
        if self.p not in self.attractors or self.q not in self.repellers:
            raise ContractError("p must be an attractor and q a repeller")
        for c in self.attractors + self.repellers:
            if map(c) != c:
                raise ContractError("declared attractor/repeller is not fixed", {"point": repr(c)})

    @property
    def strict(self) -> bool:
        """Exactly one attractor and one repeller."""
        return len(self.attractors) == 1 and len(self.repellers) == 1

    def distance_to_attractors(self, x: Point) -> float:
        return min(self.space.distance(x, a) for a in self.attractors)

    def distance_to_repellers(self, x: Point) -> float:
        return min(self.space.distance(x, r) for r in self.repellers)

    def is_fixed_special(self, x: Point) -> bool:
        return x in self.attractors or x in self.repellers

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        out.update({"p": self.p, "q": self.q, "attractors": list(self.attractors), "repellers": list(self.repellers)})
        return out


def interval_system(homeo: IntervalHomeo, name: str = "") -> SimpleSystem:
    """Wrap an increasing interval homeomorphism with its attractor/repeller sets."""
    attract, repel = homeo.classify_fixed_points()
    if not attract or not repel:
        raise ContractError("interval map needs an attracting and a repelling fixed point",
                            {"fixed": list(homeo.fixed_points)})
    return SimpleSystem(
        homeo.space, homeo, attract[0], repel[0], attract, repel,
        name=name or homeo.variant.value,
        description={"builder": homeo.variant.value, "params": {}},
    )


def make_square_map() -> SimpleSystem:
    """h(x) = x² on [0, 1]: p = 0 attracts, q = 1 repels."""
    return interval_system(IntervalHomeo.square(), name="square")


def make_three_fixed_homeo(lo: float = 0.0, hi: float = 1.0) -> IntervalHomeo:
    return IntervalHomeo.three_fixed(lo, hi)


def make_three_fixed_system() -> SimpleSystem:
    return interval_system(make_three_fixed_homeo(), name="three-fixed")


def make_piecewise_linear_homeo(breakpoints: Sequence[Tuple[float, float]]) -> IntervalHomeo:
    return IntervalHomeo(HomeoVariant.PIECEWISE_LINEAR, breakpoints=breakpoints)


def make_identity_system(lo: float = 0.0, hi: float = 1.0) -> DynamicalSystem:
    """Identity on [lo, hi]; it does not have shadowing."""
    space = IntervalSpace(lo, hi)
    return DynamicalSystem(space, IdentityMap(space), name="identity",
                           description={"builder": "identity", "params": {"lo": lo, "hi": hi}})


def make_tent_system() -> DynamicalSystem:
    m = TentMap()
    return DynamicalSystem(m.space, m, name="tent", description={"builder": "tent", "params": {}})


# ─── Star unions ──────────────────────────────────────────

class StarMap(StructuralMap):
    """Acts as the n-th arm map on the n-th arm."""

    def __init__(self, space: StarSpace, arm_maps: Sequence[StructuralMap]):
        super().__init__(space)
        self.arm_maps = tuple(arm_maps)
        self.is_homeomorphism = all(m.is_homeomorphism for m in self.arm_maps)
        self.is_monotone = all(m.is_monotone for m in self.arm_maps)

    def __call__(self, p):
        n, x = p
        return self.space.canonical((n, self.arm_maps[n](x)))

    def inverse(self, p):
        n, x = p
        return self.space.canonical((n, self.arm_maps[n].inverse(x)))

    def lipschitz_bound(self) -> float:
        return max(getattr(m, "lipschitz_bound", lambda: math.inf)() for m in self.arm_maps)


def make_star(
    arm_systems: Sequence[SimpleSystem],
    N: Optional[int] = None,
    glue: Optional[Sequence[Point]] = None,
    name: str = "star",
) -> SimpleSystem:
    """
    Star union of the first N arm systems glued at their quasi-attractors.
    The centre attracts; every arm repeller repels.
    """
    arms = list(arm_systems[:N] if N is not None else arm_systems)
    if not arms:
        raise DomainError("star needs at least one arm")
    glue_points = list(glue) if glue is not None else [s.p for s in arms]
    if len(glue_points) != len(arms):
        raise DomainError("one glue point per arm", {"arms": len(arms), "glue": len(glue_points)})
    for n, (s, g) in enumerate(zip(arms, glue_points)):
        g = s.space.canonical(g)
        if g not in s.attractors:
            raise ContractError("arm is glued away from its quasi-attractor", {"arm": n, "glue": repr(g)})
    space = StarSpace([s.space for s in arms], glue_points)
    star_map = StarMap(space, [s.map for s in arms])
    attractors = [space.center]
    repellers = []
    for n, s in enumerate(arms):
        attractors.extend(space.canonical((n, a)) for a in s.attractors)
        repellers.extend(space.canonical((n, r)) for r in s.repellers)
    return SimpleSystem(space, star_map, space.center, repellers[0], attractors, repellers, name=name,
                        description={"builder": name, "params": {"arms": len(arms)}})


def make_n_star(n: int = 3, arm: str = "square") -> SimpleSystem:
    """stₙ: n unit arms, each contracted toward the centre."""
    if n < 1:
        raise DomainError("star order must be positive", {"n": n})
    factory = {"square": make_square_map, "three-fixed": make_three_fixed_system}.get(arm)
    if factory is None:
        raise DomainError("unknown arm map", {"arm": arm})
    star = make_star([factory() for _ in range(n)], name="n-star")
    star.description = {"builder": "n-star", "params": {"n": n, "arm": arm}}
    return star


def make_omega_star(N: int = 16) -> SimpleSystem:
    """
    Truncated ω-star: arm n is the segment {(t, t/n) : 0 ≤ t ≤ 1/n}, stored
    by arc length, so its diameter is hypot(1/n, 1/n²).
    """
    if N < 1:
        raise DomainError("truncation must be positive", {"N": N})
    arms = []
    for n in range(1, N + 1):
        L = math.hypot(1.0 / n, 1.0 / n ** 2)
        arms.append(interval_system(IntervalHomeo.square(0.0, L), name=f"arm{n}"))
    star = make_star(arms, name="omega-star")
    star.description = {"builder": "omega-star", "params": {"N": N}}
    return star


# ─── Bridges ──────────────────────────────────────────────

class BridgeMap(StructuralMap):
    def __init__(self, space: BridgeSpace, left: StructuralMap, bridge: IntervalHomeo, right: StructuralMap):
        super().__init__(space)
        self.left, self.bridge, self.right = left, bridge, right
        self.is_homeomorphism = left.is_homeomorphism and right.is_homeomorphism
        self.is_monotone = left.is_monotone and right.is_monotone

    def __call__(self, p):
        part, x = p
        if part == 0:
            return self.space.canonical((0, self.left(x)))
        if part == 2:
            return self.space.canonical((2, self.right(x)))
        return self.space.canonical((1, self.bridge(x)))

    def inverse(self, p):
        part, x = p
        if part == 0:
            return self.space.canonical((0, self.left.inverse(x)))
        if part == 2:
            return self.space.canonical((2, self.right.inverse(x)))
        return self.space.canonical((1, self.bridge.inverse(x)))


def make_bridge(
    sys1: SimpleSystem,
    sys2: SimpleSystem,
    bridge_map: Optional[IntervalHomeo] = None,
) -> SimpleSystem:
    """
    X₁ ∪ [p₁, p₂] ∪ X₂ glued at the quasi-attractors p₁ = sys1.p and
    p₂ = sys2.p, with ``bridge_map`` on the unit bridge.
    """
    bridge_map = bridge_map or make_three_fixed_homeo()
    if (bridge_map.lo, bridge_map.hi) != (0.0, 1.0):
        raise DomainError("bridge map must act on [0, 1]")
    if bridge_map(0.0) != 0.0 or bridge_map(1.0) != 1.0:
        raise ContractError("bridge map must fix both endpoints",
                            {"h(0)": bridge_map(0.0), "h(1)": bridge_map(1.0)})
    attract, repel = bridge_map.classify_fixed_points()
    if not {0.0, 1.0} <= set(attract):
        logger.warning("bridge endpoints are not both attracting; glued system may fail to shadow")
    space = BridgeSpace(sys1.space, sys1.p, sys2.space, sys2.p)
    bmap = BridgeMap(space, sys1.map, bridge_map, sys2.map)
    attractors = [space.canonical((0, a)) for a in sys1.attractors]
    attractors += [space.canonical((2, a)) for a in sys2.attractors]
    attractors += [space.canonical((1, a)) for a in attract if 0.0 < a < 1.0]
    repellers = [space.canonical((0, r)) for r in sys1.repellers]
    repellers += [space.canonical((2, r)) for r in sys2.repellers]
    repellers += [space.canonical((1, r)) for r in repel if 0.0 < r < 1.0]
    return SimpleSystem(
        space, bmap, attractors[0], repellers[0], attractors, repellers, name="bridge",
        description={"builder": "bridge", "params": {"left": sys1.description, "right": sys2.description}},
    )


def make_star_bridge(n: int = 3) -> SimpleSystem:
    """Two n-stars joined centre to centre by the three-fixed bridge."""
    system = make_bridge(make_n_star(n), make_n_star(n), make_three_fixed_homeo())
    system.description = {"builder": "bridge", "params": {"n": n}}
    return system


# ─── Combs ────────────────────────────────────────────────

def _zigzag(j: int) -> int:
    return 2 * j if j >= 0 else -2 * j - 1


def _unzigzag(z: int) -> int:
    return z // 2 if z % 2 == 0 else -(z + 1) // 2


class OrbitSet:
    """
    Countable invariant set D given by the full orbits of finitely many seeds.

    Keys are ``(orbit, j)`` addressing fʲ(seed). Points are computed by one
    forward chain starting at the window minimum, so f(point(o, j)) equals
    point(o, j + 1) bit for bit inside and after the window. The window of an
    orbit is the run of points at least γ away from the attractors and
    repellers. Enumeration index: O·zz(j) + o + 1.
    """

    def __init__(self, system: SimpleSystem, seeds: Sequence[Point], gamma: float = DEFAULT_GAMMA,
                 max_steps: int = 10_000):
        if not system.map.is_homeomorphism:
            raise ContractError("orbit sets need an invertible map", {"system": system.name})
        if not seeds:
            raise DomainError("orbit set needs at least one seed")
        self.system = system
        self.space = system.space
        self.gamma = float(gamma)
        self.max_steps = int(max_steps)
        self._forward: List[List[Point]] = []
        self._backward: List[List[Point]] = []
        self._window: List[Tuple[int, int]] = []
        known: Dict[Point, int] = {}
        for o, seed in enumerate(seeds):
            seed = self.space.canonical(seed)
            if system.is_fixed_special(seed):
                raise ContractError("D must avoid p and q", {"seed": repr(seed)})
            if self._near_special(seed):
                raise ContractError("seed lies within γ of an attractor or repeller", {"seed": repr(seed)})
            if seed in known:
                raise ContractError("seeds share an orbit", {"seed": repr(seed), "orbit": known[seed]})
            self._build_orbit(seed)
            for j in range(self._window[o][0], self._window[o][1] + 1):
                known.setdefault(self.point((o, j)), o)
        self.orbits = len(seeds)
        logger.debug(f"OrbitSet: {self.orbits} orbits, {self.window_size} window points")

    def _near_special(self, x: Point) -> bool:
        s = self.system
        return min(s.distance_to_attractors(x), s.distance_to_repellers(x)) < self.gamma

    def _build_orbit(self, seed: Point) -> None:
        f = self.system.map
        x, j = seed, 0
        while j > -self.max_steps:
            y = f.inverse(x)
            if self._near_special(y):
                break
            x, j = y, j - 1
        j_min = j
        forward = [x]
        while len(forward) < self.max_steps:
            y = f(forward[-1])
            if j_min + len(forward) > 0 and self._near_special(y):
                break
            forward.append(y)
        self._forward.append(forward)
        self._backward.append([])
        self._window.append((j_min, j_min + len(forward) - 1))

    # ToothIndex protocol

    def point(self, key) -> Point:
        o, j = key
        j_min = self._window[o][0]
        f = self.system.map
        if j >= j_min:
            chain = self._forward[o]
            while len(chain) <= j - j_min:
                chain.append(f(chain[-1]))
            return chain[j - j_min]
        chain = self._backward[o]
        while len(chain) < j_min - j:
            chain.append(f.inverse(chain[-1] if chain else self._forward[o][0]))
        return chain[j_min - j - 1]

    def index(self, key) -> int:
        o, j = key
        return self.orbits * _zigzag(j) + o + 1

    def is_member(self, key) -> bool:
        try:
            o, j = key
        except (TypeError, ValueError):
            return False
        return isinstance(o, (int, np.integer)) and isinstance(j, (int, np.integer)) and 0 <= o < self.orbits

    def window_keys(self) -> List[Tuple[int, int]]:
        return [(o, j) for o, (lo, hi) in enumerate(self._window) for j in range(lo, hi + 1)]

    def image_key(self, key):
        return (key[0], key[1] + 1)

    def preimage_key(self, key):
        return (key[0], key[1] - 1)

    def key_for_index(self, index: int) -> Tuple[int, int]:
        z, o = divmod(index - 1, self.orbits)
        return (o, _unzigzag(z))

    def first_keys(self, count: int) -> List[Tuple[int, int]]:
        return [self.key_for_index(i) for i in range(1, count + 1)]

    def window_points(self) -> List[Point]:
        return [self.point(k) for k in self.window_keys()]

    @property
    def window_size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self._window)

    def metadata(self) -> Dict[str, Any]:
        return {
            "orbits": self.orbits,
            "gamma": self.gamma,
            "window_size": self.window_size,
            "windows": [list(w) for w in self._window],
        }


class FiniteToothIndex:
    """Explicit finite invariant set D = [d₁, …, d_k], keyed by position."""

    def __init__(self, system: SimpleSystem, points: Sequence[Point]):
        pts = [system.space.canonical(d) for d in points]
        if not pts:
            raise DomainError("D must be nonempty")
        for d in pts:
            if d in (system.p, system.q):
                raise ContractError("D must avoid p and q", {"point": repr(d)})
        self.points = tuple(pts)
        self._keys = {d: i for i, d in enumerate(pts)}
        if len(self._keys) != len(pts):
            raise DomainError("D has repeated points")
        self._image = {}
        for i, d in enumerate(pts):
            j = self._keys.get(system.map(d))
            if j is None:
                raise ContractError("D is not invariant under the base map", {"point": repr(d)})
            self._image[i] = j
        self._preimage = {j: i for i, j in self._image.items()}

    def point(self, key):
        return self.points[key]

    def index(self, key) -> int:
        return key + 1

    def is_member(self, key) -> bool:
        return isinstance(key, (int, np.integer)) and 0 <= key < len(self.points)

    def window_keys(self):
        return list(range(len(self.points)))

    def image_key(self, key):
        return self._image[key]

    def preimage_key(self, key):
        return self._preimage[key]

    def first_keys(self, count: int):
        return list(range(min(count, len(self.points))))

    def window_points(self):
        return list(self.points)

    def metadata(self) -> Dict[str, Any]:
        return {"finite": len(self.points)}


class CombMap(StructuralMap):
    """
    Comb dynamics: h(x, 0) = (h₁(x), 0) on the base and, on the tooth over dᵢ,
    y ↦ (1/j)·h₂(i·y) onto the tooth over dⱼ = h₁(dᵢ). With the normalized
    radius u = i·r/ℓ this reads u ↦ h₂(u) per arm.
    """

    def __init__(self, comb: CombSpace, base_map: StructuralMap, tooth_map: Optional[IntervalHomeo] = None):
        super().__init__(comb)
        self.comb = comb
        self.base_map = base_map
        self.tooth_map = tooth_map or IntervalHomeo.square()
        if self.tooth_map(0.0) != 0.0:
            raise ContractError("tooth map must fix the tooth root")
        self.is_homeomorphism = base_map.is_homeomorphism and self.tooth_map.is_homeomorphism
        self.is_monotone = base_map.is_monotone and self.tooth_map.is_monotone

    def _tooth_point(self, key, arm: int, u: float):
        root = self.comb.teeth.point(key)
        if u <= 0.0:
            return (root, None)
        return (root, (key, arm, self.comb.scale(key) * min(u, 1.0)))

    def __call__(self, p):
        x, tooth = p
        if tooth is None:
            return (self.base_map(x), None)
        key, arm, r = tooth
        u = r / self.comb.scale(key)
        return self._tooth_point(self.comb.teeth.image_key(key), arm, self.tooth_map(u))

    def inverse(self, p):
        x, tooth = p
        if tooth is None:
            return (self.base_map.inverse(x), None)
        key, arm, r = tooth
        u = r / self.comb.scale(key)
        return self._tooth_point(self.comb.teeth.preimage_key(key), arm, self.tooth_map.inverse(u))

    def describe(self):
        return {"map": "comb", "base": self.base_map.describe(), "tooth": self.tooth_map.describe()}


def make_comb(
    base: SimpleSystem,
    D: Union[OrbitSet, FiniteToothIndex, Sequence[Point]],
    arms: int,
    tooth_map: Optional[IntervalHomeo] = None,
    arm_length: float = 1.0,
    teeth: Optional[int] = None,
) -> SimpleSystem:
    """
    The (X, D, arms)-comb over a simple base with its comb map. ``teeth``
    bounds how many teeth (by enumeration index) the complex materializes;
    the system then retracts collapsed teeth onto their roots, and
    ``system.exact()`` is the comb homeomorphism itself.
    """
    if not isinstance(D, (OrbitSet, FiniteToothIndex)):
        D = FiniteToothIndex(base, D)
    for key in D.window_keys():
        if D.point(key) in (base.p, base.q):
            raise ContractError("D must avoid p and q", {"key": repr(key)})
    materialized = D.first_keys(teeth) if teeth is not None else D.window_keys()
    comb = CombSpace(base.space, D, arms=arms, arm_length=arm_length, materialized=materialized)
    cmap = CombMap(comb, base.map, tooth_map)
    retract = teeth is not None or isinstance(D, OrbitSet) or base.retract
    return SimpleSystem(
        comb, cmap, (base.p, None), (base.q, None), name="comb", retract=retract,
        description={"builder": "comb", "params": {"arms": arms, "teeth": len(materialized)}},
    )


def make_square_comb(arms: int = 1, m: int = 4, teeth: Optional[int] = None, gamma: float = DEFAULT_GAMMA) -> SimpleSystem:
    """Comb over x² with D the orbits of (2l+1)/(2m), l < m."""
    base = make_square_map()
    D = OrbitSet(base, [(2 * l + 1) / (2 * m) for l in range(m)], gamma)
    system = make_comb(base, D, arms, teeth=teeth if teeth is not None else m)
    system.description = {"builder": "comb", "params": {"arms": arms, "m": m, "teeth": teeth or m}}
    return system


# ─── Universal dendrite stages ────────────────────────────

@dataclass
class StageSystem:
    """One finite stage X_k with its map, dense set D_k and bonding map to X_{k−1}."""
    k: int
    system: SimpleSystem
    dense: OrbitSet
    complex: DendriteComplex
    bonding: Optional[ProjectionMap] = None
    arm_length: float = 1.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def space(self) -> SpaceHandle:
        return self.system.space

    @property
    def map(self) -> StructuralMap:
        return self.system.map

    def dense_on_complex(self) -> List[Point]:
        """Window points of D_k lying on the materialized approximant."""
        return [d for d in self.dense.window_points() if self.space.retract(d) == d]

    def labels(self) -> Dict[str, List[Location]]:
        cx = self.complex
        return {
            "p": [cx.locate(self.system.p)],
            "q": [cx.locate(self.system.q)],
            "D": [cx.locate(d) for d in self.dense_on_complex()],
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "vertices": self.complex.n_vertices,
            "edges": len(self.complex.edges),
            "arm_length": self.arm_length,
            "dense": self.dense.metadata(),
            **self.metadata,
        }


def build_universal_stage(
    n: int,
    K: int,
    m: int,
    seed: int = 0,
    gamma: float = DEFAULT_GAMMA,
    teeth: Optional[int] = None,
) -> List[StageSystem]:
    """
    Stages X₀ … X_K of the universal dendrite of order n.

    X₀ = [0, 1] with x², D₀ the orbits of (2l+1)/(2m). X_{k+1} is the
    (X_k, D_k, n−2)-comb with tooth arm length 2^{−k}; D_{k+1} is seeded at
    normalized radii (2l+1)/(2m) on every arm of each materialized tooth.
    The bonding maps collapse teeth. Each stage materializes ``teeth``
    teeth (default m).
    """
    for name, value, low in (("n", n, 3), ("K", K, 1), ("m", m, 1)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < low:
            raise DomainError(f"{name} must be an integer ≥ {low}", {name: value})
    teeth = m if teeth is None else teeth
    rng = np.random.default_rng(seed)

    base = make_square_map()
    D0 = OrbitSet(base, [(2 * l + 1) / (2 * m) for l in range(m)], gamma)
    cx0 = DendriteComplex.from_space(base.space, D0.window_points())
    base.space._complex = cx0
    stages = [StageSystem(0, base, D0, cx0, metadata={"gamma": gamma})]

    for k in range(1, K + 1):
        prev = stages[-1]
        arm_length = 2.0 ** (-(k - 1))
        comb = CombSpace(prev.space, prev.dense, arms=n - 2, arm_length=arm_length,
                         materialized=prev.dense.first_keys(teeth))
        system = SimpleSystem(
            comb, CombMap(comb, prev.map), (prev.system.p, None), (prev.system.q, None),
            name=f"stage{k}", retract=True,
            description={"builder": "universal-stage", "params": {"n": n, "k": k, "m": m, "seed": seed}},
        )
        seeds = [
            (comb.teeth.point(key), (key, arm, comb.scale(key) * (2 * l + 1) / (2 * m)))
            for key in comb.materialized for arm in range(n - 2) for l in range(m)
        ]
        order = rng.permutation(len(seeds))
        dense = OrbitSet(system, [seeds[i] for i in order], gamma)
        on_complex = [d for d in dense.window_points() if comb.retract(d) == d]
        cx = DendriteComplex.from_space(comb, on_complex)
        comb._complex = cx
        stages.append(StageSystem(k, system, dense, cx, ProjectionMap(comb), arm_length,
                                  metadata={"gamma": gamma, "materialized": len(comb.materialized)}))
        logger.debug(f"Stage {k}: {cx.n_vertices} vertices, D window {dense.window_size}")

    log_summary(logger, f"Built universal stages n={n} K={K} m={m}", n=n, K=K, m=m, seed=seed)
    return stages


def branch_points(stages: Sequence[StageSystem], k: int) -> List[Location]:
    """Locations in X_k of the lifted points of D₀ … D_{k−1} (the branch points of the exact stage)."""
    cx = stages[k].complex
    out: Dict[Location, None] = {}
    for j in range(k):
        for d in stages[j].dense.window_points():
            lifted = d
            for _ in range(j, k):
                lifted = (lifted, None)
            if stages[k].space.retract(lifted) != lifted:
                continue
            out.setdefault(cx.locate(lifted), None)
    return list(out)


def stage_density_radius(stages: Sequence[StageSystem], k: int, spacing: float = 0.005) -> float:
    """Largest geodesic distance from a fine-grid point of X_k to the branch points."""
    targets = branch_points(stages, k)
    if not targets:
        return math.inf
    cx = stages[k].complex
    grid = cx.fine_grid(spacing)
    worst = 0.0
    locs = list(grid.locations)
    for start in range(0, len(locs), 512):
        block = cx.geodesic_matrix(locs[start:start + 512], targets)
        worst = max(worst, float(block.min(axis=1).max()))
    return worst


def verify_stage(stages: Sequence[StageSystem], k: int, n: int) -> VerificationReport:
    """Order invariants of X_k: orders in {1, 2, n}, D_k points of order 2, off the branch set."""
    stage = stages[k]
    cx = stage.complex
    failures = []
    allowed = {1, 2, n}
    branch = []
    for v in range(cx.n_vertices):
        order = cx.degree(v)
        if order not in allowed:
            failures.append({"vertex": v, "order": order})
        if order >= 3:
            branch.append(v)
    branch_set = set(branch)
    dense = stage.dense_on_complex()
    for d in dense:
        loc = cx.locate(d)
        if cx.point_order(loc) != 2:
            failures.append({"dense_point": loc.to_dict(), "order": cx.point_order(loc)})
        if cx.vertex_of(loc) in branch_set:
            failures.append({"dense_point": loc.to_dict(), "reason": "on a branch point"})
    return VerificationReport(
        name=f"stage-{k}",
        passed=not failures,
        checked=cx.n_vertices + len(dense),
        failures=failures,
        details={"branch_points": len(branch), "dense_points": len(dense)},
    )


# ─── Inverse limits ───────────────────────────────────────

def inverse_limit_point(stages: Sequence[StageSystem], x_top: Point) -> List[Point]:
    """Thread (x₀, …, x_K) with φ_k(x_k) = x_{k−1}, from a point of the last stage."""
    thread = [stages[-1].space.canonical(x_top)]
    for stage in reversed(stages[1:]):
        thread.append(stage.bonding(thread[-1]))
    return thread[::-1]


def inverse_limit_distance(stages: Sequence[StageSystem], a: Sequence[Point], b: Sequence[Point]) -> float:
    """Σ_k 2^{−(k+1)} d_k(a_k, b_k) over the built stages."""
    if len(a) != len(stages) or len(b) != len(stages):
        raise DomainError("threads must have one coordinate per stage")
    return float(sum(2.0 ** (-(k + 1)) * s.space.distance(x, y) for k, (s, x, y) in enumerate(zip(stages, a, b))))


def inverse_limit_map(stages: Sequence[StageSystem], thread: Sequence[Point]) -> List[Point]:
    """The shift-commuting map acting coordinatewise with the exact stage maps."""
    return [s.map(x) for s, x in zip(stages, thread)]


def check_bonding_commutes(stages: Sequence[StageSystem], samples: int = 1000, seed: int = 0) -> VerificationReport:
    """φ_k ∘ h_k = h_{k−1} ∘ φ_k exactly on sampled points of every stage."""
    rng = np.random.default_rng(seed)
    failures = []
    checked = 0
    for stage, prev in zip(stages[1:], stages):
        for _ in range(samples):
            x = stage.complex.point(stage.complex.random_location(rng))
            lhs = stage.bonding(stage.map(x))
            rhs = prev.map(stage.bonding(x))
            checked += 1
            if lhs != rhs:
                failures.append({"stage": stage.k, "point": repr(x)})
    return VerificationReport("bonding-commutes", not failures, checked, failures)


# ─── Checks ───────────────────────────────────────────────

def sample_points(space: SpaceHandle, rng: np.random.Generator, count: int) -> List[Point]:
    """Uniform points: by length on dendrite-like spaces, by area on the torus."""
    if space.kind is SpaceKind.INTERVAL:
        return [float(x) for x in rng.uniform(space.lo, space.hi, count)]
    if space.kind is SpaceKind.TORUS:
        return [space.canonical(tuple(row)) for row in rng.uniform(0.0, 1.0, (count, 2))]
    cx = complex_of(space)
    return [cx.point(cx.random_location(rng)) for _ in range(count)]


def grid_points(space: SpaceHandle, spacing: float) -> List[Point]:
    cx = complex_of(space)
    return cx.points(cx.fine_grid(spacing).locations)


def _exact_step(system: DynamicalSystem, backward: bool = False) -> Callable[[Point], Point]:
    """Step of the exact map; approximants are judged by the system they approximate."""
    if not backward:
        return system.map
    if not system.map.is_homeomorphism:
        raise ContractError("system has no inverse", {"system": system.name})
    return system.map.inverse


def convergence_time(system: SimpleSystem, x: Point, N_max: int, tol: float, backward: bool = False) -> Optional[int]:
    """Least N ≤ N_max with fᴺ(x) (or f⁻ᴺ(x)) within tol of the attractors (repellers)."""
    dist = system.distance_to_repellers if backward else system.distance_to_attractors
    step = _exact_step(system, backward)
    for N in range(N_max + 1):
        if dist(x) < tol:
            return N
        if N < N_max:
            x = step(x)
    return None


def is_simple(system: SimpleSystem, samples: int = 200, N_max: int = 500, tol: float = 1e-3, seed: int = 0) -> VerificationReport:
    """
    Sampled simplicity check: orbits of sampled points reach the attractor set
    forward and the repeller set backward within N_max steps.
    """
    rng = np.random.default_rng(seed)
    failures = []
    forward_times, backward_times = [], []
    points = sample_points(system.space, rng, samples)
    for x in points:
        if system.is_fixed_special(x):
            continue
        nf = convergence_time(system, x, N_max, tol)
        nb = convergence_time(system, x, N_max, tol, backward=True)
        if nf is None or nb is None:
            failures.append({"point": repr(x), "forward": nf, "backward": nb})
            continue
        forward_times.append(nf)
        backward_times.append(nb)
    return VerificationReport(
        name="simple",
        passed=not failures,
        checked=len(points),
        failures=failures,
        details={
            "strict": system.strict,
            "attractors": len(system.attractors),
            "repellers": len(system.repellers),
            "max_forward_steps": max(forward_times, default=0),
            "max_backward_steps": max(backward_times, default=0),
        },
    )


def quasi_attractor_certificate(
    system: SimpleSystem,
    points: Optional[Sequence[Point]] = None,
    eps_schedule: Sequence[float] = (0.2, 0.1, 0.05),
    inverse: bool = False,
) -> VerificationReport:
    """
    For each ε find a trapping ball V = {d(·, A) < r}, r ≤ ε, whose image
    lies at distance < r from A (so the closure of f(V) sits inside V).
    ``inverse`` certifies a quasi-repeller with f⁻¹.
    """
    A = list(points) if points is not None else list(system.repellers if inverse else system.attractors)
    step = _exact_step(system, inverse)
    space = system.space
    certificates = []
    failures = []
    for eps in eps_schedule:
        found = None
        r = float(eps)
        for _ in range(12):
            grid = [x for x in grid_points(space, r / 16.0) if min(space.distance(x, a) for a in A) <= r]
            image = max(min(space.distance(step(x), a) for a in A) for x in grid)
            if image < r:
                found = {"eps": eps, "radius": r, "image_radius": image}
                break
            r /= 2.0
        if found is None:
            failures.append({"eps": eps})
        else:
            certificates.append(found)
    return VerificationReport(
        name="quasi-repeller" if inverse else "quasi-attractor",
        passed=not failures,
        checked=len(eps_schedule),
        failures=failures,
        details={"certificates": certificates},
    )


# ─── Registry ─────────────────────────────────────────────

def _universal_stage_system(n: int = 3, k: int = 1, m: int = 8, seed: int = 0) -> SimpleSystem:
    return build_universal_stage(n, k, m, seed)[k].system


SYSTEM_BUILDERS: Dict[str, Callable[..., DynamicalSystem]] = {
    "square": make_square_map,
    "three-fixed": make_three_fixed_system,
    "piecewise-linear": lambda breakpoints: interval_system(make_piecewise_linear_homeo(breakpoints)),
    "identity": make_identity_system,
    "tent": make_tent_system,
    "n-star": make_n_star,
    "omega-star": make_omega_star,
    "bridge": make_star_bridge,
    "comb": make_square_comb,
    "universal-stage": _universal_stage_system,
}


def build_system(builder: str, params: Optional[Dict[str, Any]] = None) -> DynamicalSystem:
    """Build a registered system from its name and keyword parameters."""
    factory = SYSTEM_BUILDERS.get(builder)
    if factory is None:
        raise ConfigError(f"Unknown system builder: {builder}", {"known": sorted(SYSTEM_BUILDERS)})
    params = dict(params or {})
    try:
        system = factory(**params)
    except TypeError as e:
        raise ConfigError(f"Bad parameters for {builder}: {e}", {"params": params})
    system.description = {"builder": builder, "params": params}
    return system

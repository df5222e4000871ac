"""
SHADOWLAB Rendering
Deterministic SVG drawings of dendrite complexes (radial tree layout with
highlighted subcontinua) and torus scenes (segments wrapped into the unit
square, split at the boundary).

Enhanced with:
- Byte-stable SVG output (fixed hash salt, no date metadata, text as text)
- Stroke counts returned next to the document for structural checks
- JSON torus scenes that the CLI can re-render
"""

import io
import json
import logging
import math
from dataclasses import dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure

from shadowlab.anosov import TorusSegment
from shadowlab.core.errors import DomainError
from shadowlab.dendrite import DENDRITE_SCHEMA, DendriteComplex, DendriteFile, Location, Subtree, parse_dendrite

logger = logging.getLogger("shadowlab.render")

TORUS_SCENE_SCHEMA = "shadowlab.torus-scene/1"
SVG_RC = {"svg.hashsalt": "shadowlab", "svg.fonttype": "none"}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
FIGSIZE = (6.0, 6.0)


@dataclass
class RenderResult:
    svg: str
    strokes: Dict[str, int] = field(default_factory=dict)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.svg, encoding="utf-8")
        return path


def _to_svg(fig: Figure) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


# ─── Dendrites ────────────────────────────────────────────

def tree_layout(cx: DendriteComplex) -> np.ndarray:
    """
    Radial layout. The root is the highest-degree vertex (lowest index on
    ties); every subtree gets an angular wedge proportional to its leaf
    count, and each child sits one edge length out along its wedge centre.
    """
    root = max(range(cx.n_vertices), key=lambda v: (cx.degree(v), -v))
    children: Dict[int, List[Tuple[int, float]]] = {v: [] for v in range(cx.n_vertices)}
    order = [root]
    seen = {root}
    for v in order:
        for e, w in sorted(cx.adjacency[v], key=lambda t: t[0]):
            if w not in seen:
                seen.add(w)
                children[v].append((w, cx.edges[e].length))
                order.append(w)
    leaves = {}
    for v in reversed(order):
        leaves[v] = max(1, sum(leaves[w] for w, _ in children[v]))

    pos = np.zeros((cx.n_vertices, 2))
    wedge = {root: (0.0, 2.0 * math.pi)}
    for v in order:
        lo, hi = wedge[v]
        start = lo
        for w, length in children[v]:
            span = (hi - lo) * leaves[w] / leaves[v]
            wedge[w] = (start, start + span)
            theta = start + span / 2.0
            pos[w] = pos[v] + length * np.array([math.cos(theta), math.sin(theta)])
            start += span
    return pos


def _location_xy(cx: DendriteComplex, pos: np.ndarray, loc: Location) -> np.ndarray:
    e = cx.edges[loc.edge]
    return (1.0 - loc.t) * pos[e.u] + loc.t * pos[e.v]


def render_dendrite(
    cx: DendriteComplex,
    highlights: Sequence[Subtree] = (),
    labels: Optional[Dict[str, Sequence[Location]]] = None,
    title: str = "",
) -> RenderResult:
    """
    One stroke per carrier arc of the underlying space (per edge when the
    complex carries no arcs); highlighted subtrees are drawn on top.
    """
    pos = tree_layout(cx)
    carriers: Dict[Any, List[int]] = {}
    for e in cx.edges:
        carriers.setdefault(e.key if e.key is not None else ("edge", e.id), []).append(e.id)

    fig = Figure(figsize=FIGSIZE)
    ax = fig.add_subplot()
    strokes = {"carriers": 0, "tooth": 0, "highlight": 0}
    for key, ids in carriers.items():
        segs = [[pos[cx.edges[i].u], pos[cx.edges[i].v]] for i in ids]
        ax.add_collection(LineCollection(segs, colors="#444444", linewidths=1.2))
        strokes["carriers"] += 1
        if isinstance(key, tuple) and key and key[0] == "tooth":
            strokes["tooth"] += 1

    for n, A in enumerate(highlights):
        segs = [
            [_location_xy(cx, pos, Location(e, t0)), _location_xy(cx, pos, Location(e, t1))]
            for e, t0, t1 in A.intervals
            if t1 > t0
        ]
        if segs:
            ax.add_collection(LineCollection(segs, colors=PALETTE[n % len(PALETTE)], linewidths=3.0, alpha=0.7))
        pts = [_location_xy(cx, pos, Location(e, t0)) for e, t0, t1 in A.intervals if t1 == t0]
        if pts:
            xy = np.array(pts)
            ax.scatter(xy[:, 0], xy[:, 1], s=16, color=PALETTE[n % len(PALETTE)])
        strokes["highlight"] += len(segs)

    for n, (name, locs) in enumerate(sorted((labels or {}).items())):
        if not locs:
            continue
        xy = np.array([_location_xy(cx, pos, loc) for loc in locs])
        ax.scatter(xy[:, 0], xy[:, 1], s=10, marker="x", color=PALETTE[(n + 1) % len(PALETTE)], label=name)
    if labels:
        ax.legend(loc="upper right", fontsize="small")

    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    return RenderResult(_to_svg(fig), strokes)


# ─── Torus scenes ─────────────────────────────────────────

@dataclass
class TorusScene:
    """Labelled torus segments and point sets drawn in the unit square."""
    segments: List[Tuple[str, TorusSegment]] = field(default_factory=list)
    points: List[Tuple[str, List[Tuple[float, float]]]] = field(default_factory=list)
    title: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": TORUS_SCENE_SCHEMA,
            "title": self.title,
            "segments": [
                {"label": name, "base": [float(s.base[0]), float(s.base[1])], "direction": list(s.direction), "length": s.length}
                for name, s in self.segments
            ],
            "points": [{"label": name, "points": [[float(x), float(y)] for x, y in pts]} for name, pts in self.points],
        }


def dump_scene(scene: TorusScene) -> str:
    return json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_scene(text: str) -> TorusScene:
    doc = json.loads(text)
    if doc.get("schema") != TORUS_SCENE_SCHEMA:
        raise DomainError("unknown torus scene schema", {"schema": doc.get("schema")})
    try:
        segments = [
            (s["label"], TorusSegment(tuple(s["base"]), tuple(s["direction"]), float(s["length"])))
            for s in doc.get("segments", [])
        ]
        points = [(p["label"], [tuple(xy) for xy in p["points"]]) for p in doc.get("points", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise DomainError(f"malformed torus scene: {e}")
    return TorusScene(segments, points, doc.get("title", ""))


def wrapped_pieces(seg: TorusSegment) -> List[np.ndarray]:
    """
    Split the lifted segment where it crosses x ∈ ℤ or y ∈ ℤ and translate
    every piece into [0, 1]². A segment with c crossings yields c + 1 pieces.
    """
    b = np.array([float(seg.base[0]), float(seg.base[1])])
    d = np.asarray(seg.direction, dtype=float)
    L = seg.length
    if L == 0.0:
        return []
    cuts = [0.0, L]
    for axis in (0, 1):
        if d[axis] == 0.0:
            continue
        a, z = b[axis], b[axis] + L * d[axis]
        lo, hi = min(a, z), max(a, z)
        for n in range(math.floor(lo) + 1, math.ceil(hi)):
            cuts.append((n - a) / d[axis])
    ts = np.unique(np.clip(cuts, 0.0, L))
    pieces = []
    for t0, t1 in zip(ts, ts[1:]):
        if t1 - t0 <= 1e-15:
            continue
        p0, p1 = b + t0 * d, b + t1 * d
        shift = np.floor(b + 0.5 * (t0 + t1) * d)
        pieces.append(np.array([p0 - shift, p1 - shift]))
    return pieces


def render_torus(scene: TorusScene) -> RenderResult:
    fig = Figure(figsize=FIGSIZE)
    ax = fig.add_subplot()
    strokes: Dict[str, int] = {"segments": 0}
    for n, (name, seg) in enumerate(scene.segments):
        pieces = wrapped_pieces(seg)
        color = PALETTE[n % len(PALETTE)]
        if pieces:
            ax.add_collection(LineCollection(pieces, colors=color, linewidths=0.6, label=name))
        else:
            p = (float(seg.base[0]), float(seg.base[1]))
            ax.scatter([p[0]], [p[1]], s=12, color=color, label=name)
        strokes[name] = len(pieces)
        strokes["segments"] += len(pieces)
    for n, (name, pts) in enumerate(scene.points):
        if pts:
            xy = np.array(pts, dtype=float)
            ax.scatter(xy[:, 0], xy[:, 1], s=6, color=PALETTE[(n + 3) % len(PALETTE)], label=name)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_aspect("equal")
    if scene.segments or scene.points:
        ax.legend(loc="upper right", fontsize="small")
    if scene.title:
        ax.set_title(scene.title)
    return RenderResult(_to_svg(fig), strokes)


# ─── Dispatch ─────────────────────────────────────────────

@singledispatch
def render_svg(artifact: Any, **kwargs) -> RenderResult:
    raise DomainError(f"cannot render {type(artifact).__name__}")


@render_svg.register
def _(artifact: DendriteComplex, **kwargs) -> RenderResult:
    return render_dendrite(artifact, **kwargs)


@render_svg.register
def _(artifact: DendriteFile, **kwargs) -> RenderResult:
    return render_dendrite(artifact.complex, labels=artifact.labels, **kwargs)


@render_svg.register
def _(artifact: TorusScene, **kwargs) -> RenderResult:
    return render_torus(artifact)


def load_artifact(path: Union[str, Path]) -> Union[DendriteFile, TorusScene]:
    """Read a dendrite file or a torus scene, told apart by schema."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        schema = json.loads(text).get("schema")
    except (json.JSONDecodeError, AttributeError) as e:
        raise DomainError(f"not a renderable artifact: {e}", {"path": str(path)})
    if schema == DENDRITE_SCHEMA:
        return parse_dendrite(text)
    if schema == TORUS_SCENE_SCHEMA:
        return parse_scene(text)
    raise DomainError("unknown artifact schema", {"schema": schema, "path": str(path)})

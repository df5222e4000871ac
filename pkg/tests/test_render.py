import json
import math

import numpy as np
import pytest

from shadowlab.anosov import TorusSegment
from shadowlab.constructions import make_square_comb
from shadowlab.core.errors import DomainError
from shadowlab.dendrite import DendriteFile, Location, complex_of, make_subtree, save_dendrite
from shadowlab.render import (
    TorusScene,
    dump_scene,
    load_artifact,
    parse_scene,
    render_dendrite,
    render_svg,
    render_torus,
    tree_layout,
    wrapped_pieces,
)


def test_star_has_one_stroke_per_arm(three_star_complex):
    result = render_dendrite(three_star_complex)
    assert result.strokes["carriers"] == 3
    assert result.strokes["tooth"] == 0
    assert result.svg.lstrip().startswith("<?xml")


def test_comb_strokes_count_teeth():
    comb = make_square_comb(arms=1, m=4, teeth=4)
    result = render_dendrite(complex_of(comb.space))
    assert result.strokes["carriers"] == 5
    assert result.strokes["tooth"] == 4


def test_highlights_are_drawn(three_star_complex):
    A = make_subtree(three_star_complex, [(0, 0.0, 0.5), (1, 0.0, 0.5)])
    result = render_dendrite(three_star_complex, highlights=[A], labels={"tips": [Location(2, 1.0)]})
    assert result.strokes["highlight"] == 2


def test_dendrite_svg_is_deterministic(three_star_complex):
    assert render_dendrite(three_star_complex).svg == render_dendrite(three_star_complex).svg


def test_layout_puts_edges_at_their_length(three_star_complex):
    pos = tree_layout(three_star_complex)
    for e in three_star_complex.edges:
        assert np.hypot(*(pos[e.u] - pos[e.v])) == pytest.approx(e.length)


def test_long_segment_wraps_into_many_pieces():
    a = 0.3
    seg = TorusSegment((0.1, 0.2), (math.cos(a), math.sin(a)), 40.0)
    pieces = wrapped_pieces(seg)
    assert len(pieces) >= 40
    for piece in pieces:
        assert np.all(piece >= -1e-12) and np.all(piece <= 1.0 + 1e-12)
    assert sum(np.hypot(*(p[1] - p[0])) for p in pieces) == pytest.approx(40.0)


def test_short_segment_is_one_piece():
    assert len(wrapped_pieces(TorusSegment((0.5, 0.5), (1.0, 0.0), 0.1))) == 1
    assert wrapped_pieces(TorusSegment((0.5, 0.5), (1.0, 0.0), 0.0)) == []


def test_torus_scene_file(tmp_path):
    scene = TorusScene(
        segments=[("S", TorusSegment((0.1, 0.2), (0.6, 0.8), 3.0))],
        points=[("x", [(0.5, 0.5)])],
        title="scene",
    )
    text = dump_scene(scene)
    assert dump_scene(parse_scene(text)) == text
    result = render_torus(scene)
    assert result.strokes["S"] == result.strokes["segments"] >= 3

    path = tmp_path / "scene.json"
    path.write_text(text)
    assert isinstance(load_artifact(path), TorusScene)
    assert render_svg(load_artifact(path)).svg == result.svg


def test_load_and_render_a_dendrite_file(tmp_path, three_star_complex):
    path = save_dendrite(tmp_path / "star.json", three_star_complex, {"tips": [Location(0, 1.0)]})
    artifact = load_artifact(path)
    assert isinstance(artifact, DendriteFile)
    assert render_svg(artifact).strokes["carriers"] == 3


def test_unknown_artifacts_are_rejected(tmp_path):
    path = tmp_path / "other.json"
    path.write_text(json.dumps({"schema": "other/1"}))
    with pytest.raises(DomainError):
        load_artifact(path)
    with pytest.raises(DomainError):
        render_svg(object())

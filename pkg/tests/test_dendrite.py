from collections import deque

import numpy as np
import pytest

from shadowlab.constructions import make_n_star, make_star_bridge, make_tent_system
from shadowlab.core.errors import ContractError, DomainError
from shadowlab.dendrite import (
    DendriteComplex,
    Location,
    complex_of,
    connected_span,
    distance_to_subtree,
    dump_dendrite,
    image_subtree,
    load_dendrite,
    make_subtree,
    parse_dendrite,
    point_order,
    preimage_subtree,
    save_dendrite,
    subtree_intersection,
    subtree_union,
    verify_monotone,
)


def test_complex_must_be_a_tree():
    with pytest.raises(DomainError):
        DendriteComplex.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])
    with pytest.raises(DomainError):
        DendriteComplex.from_edges(2, [(0, 1, 0.0)])


def test_path_graph_geodesic():
    cx = DendriteComplex.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    assert cx.geodesic(Location(0, 0.0), Location(1, 1.0)) == pytest.approx(2.0)
    assert cx.geodesic(Location(0, 0.3), Location(0, 0.3)) == 0.0


def test_geodesic_rejects_bad_edge():
    cx = DendriteComplex.from_edges(2, [(0, 1, 1.0)])
    with pytest.raises(DomainError):
        cx.geodesic(Location(5, 0.0), Location(0, 0.0))


def test_star_geodesic_through_centre(three_star_complex):
    cx = three_star_complex
    assert len(cx.edges) == 3
    assert cx.geodesic(Location(0, 0.5), Location(1, 0.5)) == pytest.approx(1.0)


def test_point_orders():
    star5 = make_n_star(5)
    cx = complex_of(star5.space)
    assert cx.point_order(cx.locate(star5.space.center)) == 5
    assert cx.point_order(Location(0, 0.5)) == 2
    assert cx.point_order(Location(0, 1.0)) == 1


def test_interval_intersection(square_system):
    cx = complex_of(square_system.space)
    A = make_subtree(cx, [(0, 0.0, 0.6)])
    B = make_subtree(cx, [(0, 0.4, 1.0)])
    assert subtree_intersection(A, B).intervals == ((0, 0.4, 0.6),)
    assert subtree_intersection(A, A) == A
    assert subtree_intersection(make_subtree(cx, [(0, 0.0, 0.1)]), make_subtree(cx, [(0, 0.5, 0.6)])) is None


def test_star_intersection_keeps_the_shared_arm(three_star_complex):
    cx = three_star_complex
    A = make_subtree(cx, [(0, 0.0, 1.0), (1, 0.0, 1.0)])
    B = make_subtree(cx, [(1, 0.0, 1.0), (2, 0.0, 1.0)])
    out = subtree_intersection(A, B)
    assert out.intervals == ((1, 0.0, 1.0),)
    assert out.is_connected()
    assert subtree_union(A, B) == cx.whole()


def test_connected_span(three_star_complex):
    cx = three_star_complex
    tips = [Location(e, 1.0) for e in range(3)]
    assert connected_span(cx, tips[:1]).is_point()
    assert connected_span(cx, tips[:2]).intervals == ((0, 0.0, 1.0), (1, 0.0, 1.0))
    assert connected_span(cx, tips) == cx.whole()
    with pytest.raises(DomainError):
        connected_span(cx, [])


def test_ball_is_a_subtree(three_star_complex):
    cx = three_star_complex
    centre = cx.canonical(Location(0, 0.0))
    B = cx.ball(centre, 0.25)
    assert B.length() == pytest.approx(0.75)
    assert B.is_connected()


def test_square_image_and_preimage(square_system):
    cx = complex_of(square_system.space)
    f = square_system.dendrite_map(cx)
    A = make_subtree(cx, [(0, 0.5, 0.7)])
    image = image_subtree(f, A)
    (e, t0, t1), = image.intervals
    assert (t0, t1) == pytest.approx((0.25, 0.49))

    pre = preimage_subtree(f, make_subtree(cx, [(0, 0.25, 0.49)]))
    (e, t0, t1), = pre.intervals
    assert (t0, t1) == pytest.approx((0.5, 0.7))


def test_identity_image_is_the_subtree(identity_system):
    cx = complex_of(identity_system.space)
    f = identity_system.dendrite_map(cx)
    A = make_subtree(cx, [(0, 0.2, 0.3)])
    assert image_subtree(f, A) == A
    assert preimage_subtree(f, A) == A


def test_monotonicity_check():
    tent = make_tent_system()
    f = tent.dendrite_map()
    assert not verify_monotone(f).passed
    with pytest.raises(ContractError):
        preimage_subtree(f, f.codomain.whole())


def test_homeomorphisms_pass_the_monotonicity_check(square_system, identity_system):
    assert verify_monotone(square_system.dendrite_map()).passed
    assert verify_monotone(identity_system.dendrite_map()).passed


def test_dendrite_file_keeps_structure_and_labels(tmp_path, three_star_complex):
    cx = three_star_complex
    labels = {"tips": [Location(e, 1.0) for e in range(3)]}
    text = dump_dendrite(cx, labels, {"builder": "n-star", "params": {"n": 3}})
    assert text == dump_dendrite(cx, labels, {"builder": "n-star", "params": {"n": 3}})

    path = save_dendrite(tmp_path / "star.json", cx, labels)
    loaded = load_dendrite(path)
    assert loaded.complex.n_vertices == cx.n_vertices
    assert [(e.u, e.v, e.length) for e in loaded.complex.edges] == [(e.u, e.v, e.length) for e in cx.edges]
    assert loaded.labels["tips"] == labels["tips"]
    assert parse_dendrite(text).map_description == {"builder": "n-star", "params": {"n": 3}}


def test_unknown_dendrite_schema_is_rejected():
    with pytest.raises(DomainError):
        parse_dendrite('{"schema": "other/1", "vertices": [0], "edges": []}')


@pytest.fixture
def bridge_complex():
    """Provides the complex of two 3-stars joined by a bridge."""
    return complex_of(make_star_bridge(3).space)


def test_geodesic_satisfies_the_four_point_condition(bridge_complex):
    rng = np.random.default_rng(17)
    locs = [bridge_complex.random_location(rng) for _ in range(16)]
    D = bridge_complex.geodesic_matrix(locs, locs)
    for _ in range(400):
        x, y, z, w = rng.choice(len(locs), 4, replace=False)
        sums = sorted([D[x, y] + D[z, w], D[x, z] + D[y, w], D[x, w] + D[y, z]])
        # the two largest pair sums agree on a tree
        assert sums[2] == pytest.approx(sums[1], abs=1e-9)


def _grid_components_without(grid, removed):
    neighbours = {i: [] for i in range(len(grid))}
    for a, b in grid.pairs:
        neighbours[int(a)].append(int(b))
        neighbours[int(b)].append(int(a))
    seen = {removed}
    count = 0
    for start in range(len(grid)):
        if start in seen:
            continue
        count += 1
        seen.add(start)
        queue = deque([start])
        while queue:
            for nxt in neighbours[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
    return count


def test_point_order_counts_complement_components(bridge_complex):
    grid = bridge_complex.fine_grid(0.25)
    orders = set()
    for i, loc in enumerate(grid.locations):
        order = point_order(bridge_complex, loc)
        assert order == _grid_components_without(grid, i)
        orders.add(order)
    assert orders == {1, 2, 4}


@pytest.mark.parametrize("fixture", ["three_star", "stage_comb"])
def test_image_of_preimage_stays_inside(fixture, request):
    system = request.getfixturevalue(fixture)
    system = getattr(system, "system", system)
    cx = complex_of(system.space)
    f = system.dendrite_map(cx)
    rng = np.random.default_rng(23)
    checked = 0
    for _ in range(8):
        B = cx.random_subtree(rng, k=3)
        pre = preimage_subtree(f, B)
        if pre is None:
            continue
        image = image_subtree(f, pre)
        gap = distance_to_subtree(cx, cx.sample_subtree(image, 0.01), B)
        assert gap.max() <= 1e-6
        checked += 1
    assert checked > 0

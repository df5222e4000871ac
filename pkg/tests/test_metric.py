import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from shadowlab.constructions import make_bridge, make_n_star, make_square_comb, make_square_map, sample_points
from shadowlab.core.errors import DomainError
from shadowlab.metric import (
    BridgeSpace,
    IntervalSpace,
    StarSpace,
    TorusSpace,
    build_eps_net,
    diameter,
    hausdorff_distance,
    point_set,
    torus_hausdorff,
    wrap_unit,
)


def test_star_distance_between_tips():
    star = StarSpace([IntervalSpace(), IntervalSpace()], [0.0, 0.0])
    assert star.distance((0, 1.0), (1, 1.0)) == pytest.approx(2.0)


def test_bridge_distance_crosses_the_bridge():
    bridge = BridgeSpace(IntervalSpace(), 0.0, IntervalSpace(), 0.0)
    assert bridge.distance((0, 0.3), (2, 0.2)) == pytest.approx(1.5)
    # the bridge ends are the glue points
    assert bridge.canonical((1, 0.0)) == (0, 0.0)
    assert bridge.canonical((1, 1.0)) == (2, 0.0)


def test_distance_to_self_is_zero():
    torus = TorusSpace()
    assert torus.distance((0.3, 0.9), (0.3, 0.9)) == 0.0
    assert IntervalSpace().distance(0.4, 0.4) == 0.0


def test_points_outside_the_space_are_rejected():
    with pytest.raises(DomainError):
        IntervalSpace().canonical(1.5)
    with pytest.raises(DomainError):
        StarSpace([IntervalSpace()], [0.0]).canonical((3, 0.5))
    with pytest.raises(DomainError):
        TorusSpace().canonical((float("nan"), 0.0))


def test_star_centre_is_canonical():
    star = StarSpace([IntervalSpace(), IntervalSpace(), IntervalSpace()], [0.0, 0.0, 0.0])
    assert star.canonical((2, 0.0)) == (0, 0.0)


def test_torus_canonical_wraps_and_keeps_fractions():
    torus = TorusSpace()
    assert torus.canonical((1.25, -0.25)) == pytest.approx((0.25, 0.75))
    assert torus.canonical((Fraction(3, 2), Fraction(1, 3))) == (Fraction(1, 2), Fraction(1, 3))


def test_torus_distance_wraps():
    assert TorusSpace().distance((0.05, 0.5), (0.95, 0.5)) == pytest.approx(0.1)


def test_diameter_of_endpoints_and_singletons():
    space = IntervalSpace()
    assert diameter(space, point_set(space, [0.0, 1.0])) == pytest.approx(1.0)
    assert diameter(space, point_set(space, [0.3])) == 0.0
    with pytest.raises(DomainError):
        diameter(space, point_set(space, []))


def test_interval_net_is_small_and_keeps_endpoints():
    net = build_eps_net(IntervalSpace(), 0.25)
    assert len(net) <= 5
    assert 0.0 in net.points and 1.0 in net.points


def test_star_net_covers_every_arm(three_star):
    space = three_star.space
    net = build_eps_net(space, 0.5)
    assert space.center in net.points
    fine = [space.canonical((n, s)) for n in range(3) for s in np.linspace(0.0, 1.0, 41)]
    d = space.pairwise(fine, list(net.points)).min(axis=1)
    assert d.max() <= 0.5 + 1e-12


def test_torus_net_is_wraparound_dense():
    torus = TorusSpace()
    net = build_eps_net(torus, 0.1)
    assert len(net) <= 121
    g = np.linspace(0.0, 1.0, 60, endpoint=False)
    fine = [(x, y) for x in g for y in g]
    assert torus.pairwise(fine, list(net.points)).min(axis=1).max() <= 0.1


def test_net_rejects_nonpositive_eps():
    with pytest.raises(DomainError):
        build_eps_net(IntervalSpace(), 0.0)


def test_hausdorff_of_intervals():
    space = IntervalSpace()
    A = point_set(space, [0.0])
    B = point_set(space, [1.0])
    assert hausdorff_distance(space, A, B) == pytest.approx(1.0)
    assert hausdorff_distance(space, A, A) == 0.0

    mesh = 0.001
    C = point_set(space, np.arange(0.0, 0.5 + mesh / 2, mesh).tolist(), mesh)
    D = point_set(space, np.arange(0.25, 0.75 + mesh / 2, mesh).tolist(), mesh)
    assert hausdorff_distance(space, C, D) == pytest.approx(0.25, abs=2 * mesh)


def test_hausdorff_rejects_mixed_spaces():
    a, b = IntervalSpace(), IntervalSpace()
    with pytest.raises(DomainError):
        hausdorff_distance(a, point_set(a, [0.1]), point_set(b, [0.2]))


def test_torus_hausdorff_across_the_seam():
    a = np.array([[0.01, 0.5]])
    b = np.array([[0.99, 0.5]])
    assert torus_hausdorff(a, b) == pytest.approx(0.02)


def test_wrap_unit_never_returns_one():
    out = wrap_unit(np.array([[-1e-18, 1.0], [2.5, -0.5]]))
    assert np.all(out >= 0.0) and np.all(out < 1.0)
    assert out[1] == pytest.approx([0.5, 0.5])


def test_omega_star_arm_diameters():
    from shadowlab.constructions import make_omega_star

    star = make_omega_star(8)
    for n in range(1, 9):
        arm = star.space.arms[n - 1]
        assert abs(arm.length - 1.0 / n) <= 1.0 / n ** 3 + 1e-12
    assert math.isclose(star.space.arms[0].length, math.hypot(1.0, 1.0))


def _space(name):
    if name == "interval":
        return make_square_map().space
    if name == "star":
        return make_n_star(3).space
    if name == "bridge":
        return make_bridge(make_n_star(3), make_n_star(3)).space
    if name == "comb":
        return make_square_comb(arms=1, m=4, teeth=4).space
    return TorusSpace()


SPACE_NAMES = ["interval", "star", "bridge", "comb", "torus"]


@pytest.mark.parametrize("name", SPACE_NAMES)
def test_metric_axioms_on_random_triples(name):
    space = _space(name)
    pts = sample_points(space, np.random.default_rng(11), 30)
    D = space.pairwise(pts, pts)
    assert np.allclose(D, D.T, atol=1e-12)
    assert np.all(D >= 0.0)
    assert np.allclose(np.diag(D), 0.0, atol=1e-12)
    # D[i, k] ≤ D[i, j] + D[j, k] for every triple
    through = D[:, :, None] + D[None, :, :]
    assert np.all(D[:, None, :] <= through + 1e-12)
    for i, j in [(0, 1), (2, 7), (5, 29)]:
        assert space.distance(pts[i], pts[j]) == pytest.approx(D[i, j], abs=1e-12)


def _periodic_cdist(a, b):
    shifts = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    return np.min([cdist(a, b + np.array(s)) for s in shifts], axis=0)


@pytest.mark.parametrize("name", SPACE_NAMES)
def test_hausdorff_matches_brute_force(name):
    space = _space(name)
    rng = np.random.default_rng(5)
    A = point_set(space, sample_points(space, rng, 25))
    B = point_set(space, sample_points(space, rng, 40))
    if name == "torus":
        D = _periodic_cdist(TorusSpace.as_array(A.points), TorusSpace.as_array(B.points))
    else:
        D = np.array([[space.distance(a, b) for b in B.points] for a in A.points])
    expected = max(D.min(axis=1).max(), D.min(axis=0).max())
    assert hausdorff_distance(space, A, B) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("name", SPACE_NAMES)
def test_diameter_grows_with_the_set(name):
    space = _space(name)
    pts = sample_points(space, np.random.default_rng(3), 40)
    sizes = [diameter(space, point_set(space, pts[:k])) for k in (1, 5, 20, 40)]
    assert sizes[0] == 0.0
    assert sizes == sorted(sizes)

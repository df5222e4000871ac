import numpy as np
import pytest

from shadowlab.constructions import (
    build_system,
    build_universal_stage,
    check_bonding_commutes,
    convergence_time,
    inverse_limit_distance,
    inverse_limit_point,
    is_simple,
    make_bridge,
    make_comb,
    make_n_star,
    make_piecewise_linear_homeo,
    make_square_comb,
    make_square_map,
    make_star,
    make_three_fixed_homeo,
    make_three_fixed_system,
    quasi_attractor_certificate,
    stage_density_radius,
    verify_stage,
)
from shadowlab.core.errors import ConfigError, ContractError, DomainError


@pytest.fixture(scope="module")
def stages():
    """Provides universal stages X₀ … X₂ of order 3."""
    return build_universal_stage(3, 2, 8, seed=0)


def test_square_map_fixed_points(square_system):
    assert square_system.p == 0.0
    assert square_system.q == 1.0
    assert square_system.map(0.5) == 0.25
    assert square_system.map.inverse(0.25) == 0.5


def test_three_fixed_classification():
    attract, repel = make_three_fixed_homeo().classify_fixed_points()
    assert attract == [0.0, 1.0]
    assert repel == [0.5]


def test_three_fixed_orbit_reaches_one():
    h = make_three_fixed_homeo()
    x = 0.75
    for _ in range(200):
        x = h(x)
    assert abs(x - 1.0) < 1e-6


def test_piecewise_linear_needs_monotone_breakpoints():
    h = make_piecewise_linear_homeo([(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)])
    assert h(0.5) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        make_piecewise_linear_homeo([(0.0, 0.0), (0.5, 0.75), (1.0, 0.5)])


def test_square_is_simple(square_system):
    report = is_simple(square_system, samples=50)
    assert report.passed
    assert report.details["strict"]
    assert convergence_time(square_system, 0.0, 10, 1e-3) == 0


def test_three_fixed_is_not_strictly_simple():
    report = is_simple(make_three_fixed_system(), samples=50)
    assert not report.details["strict"]
    assert report.details["attractors"] == 2


def test_star_centre_attracts(three_star):
    assert three_star.p == three_star.space.center
    assert three_star.map((1, 0.5)) == (1, 0.25)
    assert is_simple(three_star, samples=50).passed


def test_star_arm_must_be_glued_at_its_attractor():
    with pytest.raises(ContractError):
        make_star([make_square_map()], glue=[1.0])


def test_bridge_map_must_fix_its_ends():
    flip = make_piecewise_linear_homeo([(0.0, 1.0), (1.0, 0.0)])
    with pytest.raises(ContractError):
        make_bridge(make_n_star(3), make_n_star(3), flip)


def test_bridge_glue_points_attract():
    bridge = make_bridge(make_n_star(3), make_n_star(3))
    assert bridge.map((1, 0.25)) == (1, pytest.approx(0.125))
    assert (0, (0, 0.0)) in bridge.attractors
    assert (2, (0, 0.0)) in bridge.attractors


def test_comb_rejects_teeth_over_fixed_points(square_system):
    with pytest.raises(ContractError):
        make_comb(square_system, [0.0], arms=1)


def test_comb_map_on_base_and_teeth():
    comb = make_square_comb(arms=1, m=4, teeth=4)
    # a base point off D stays on the base
    assert comb.map((0.3, None)) == (pytest.approx(0.09), None)

    space = comb.space
    key = space.materialized[0]
    root = space.teeth.point(key)
    x, tooth = comb.map((root, (key, 0, space.scale(key) * 0.5)))
    assert x == space.teeth.point(space.teeth.image_key(key))
    assert tooth[0] == space.teeth.image_key(key)
    assert tooth[2] == pytest.approx(space.scale(tooth[0]) * 0.25)


def test_exact_comb_map_leaves_the_approximant(stage_comb):
    system = stage_comb.system
    space = system.space
    assert system.retract and not system.is_homeomorphism

    exact = system.exact()
    assert exact.is_homeomorphism and not exact.retract
    assert exact.attractors == system.attractors and exact.repellers == system.repellers
    assert exact.exact() is exact

    key = space.materialized[0]
    x = space.point_on(("tooth", key, 0), 0.5)
    y = exact.step(x)
    assert space.retract(y) != y
    assert system.step(x) == space.retract(y)
    assert space.distance(exact.step_back(y), x) == pytest.approx(0.0, abs=1e-12)
    assert space.arc_length(space.carrier(y)[0]) == pytest.approx(space.scale(y[1][0]))


def test_comb_orbit_converges_to_base_attractor():
    comb = make_square_comb(arms=1, m=4, teeth=4)
    space = comb.space
    key = space.materialized[0]
    x = (space.teeth.point(key), (key, 0, space.scale(key) * 0.9))
    assert convergence_time(comb, x, 500, 1e-3) is not None


def test_universal_stage_orders(stages):
    assert [s.k for s in stages] == [0, 1, 2]
    for k in (1, 2):
        assert verify_stage(stages, k, 3).passed


def test_universal_bonding_commutes(stages):
    assert check_bonding_commutes(stages, samples=200).passed


@pytest.mark.slow
def test_universal_density_shrinks(stages):
    r1 = stage_density_radius(stages, 1)
    r2 = stage_density_radius(stages, 2)
    assert r2 < r1


def test_inverse_limit_threads(stages):
    top = stages[-1]
    x = top.complex.point(top.complex.random_location(np.random.default_rng(0)))
    thread = inverse_limit_point(stages, x)
    assert len(thread) == len(stages)
    for k in range(1, len(stages)):
        assert stages[k].bonding(thread[k]) == thread[k - 1]
    assert inverse_limit_distance(stages, thread, thread) == 0.0


def test_universal_stage_rejects_bad_orders():
    with pytest.raises(DomainError):
        build_universal_stage(2, 1, 4)
    with pytest.raises(DomainError):
        build_universal_stage(3, 0, 4)


def test_quasi_attractor_certificate(square_system):
    assert quasi_attractor_certificate(square_system).passed
    assert quasi_attractor_certificate(square_system, inverse=True).passed


def test_builder_registry():
    assert build_system("n-star", {"n": 4}).description == {"builder": "n-star", "params": {"n": 4}}
    with pytest.raises(ConfigError):
        build_system("no-such-builder")
    with pytest.raises(ConfigError):
        build_system("square", {"bogus": 1})

from fractions import Fraction

import numpy as np
import pytest

from shadowlab.anosov import (
    CSV_COLUMNS,
    TorusBall,
    TorusSegment,
    ToralAutomorphism,
    cell_image_area,
    default_family,
    diameter_dichotomy_probe,
    dichotomy_sweep,
    dynamical_ball,
    find_splice_pair,
    local_product_point,
    local_stable_continuum,
    local_unstable_continuum,
    refute_shadowing,
    splice_pseudo_orbit,
    toral_system,
    transitivity_probe,
)
from shadowlab.core.errors import ContractError, DomainError
from shadowlab.core.structs import Verdict


@pytest.fixture(scope="module")
def splice():
    """Provides the spliced cat-map orbit at ε = 0.05, δ = 0.01."""
    system = toral_system()
    pair = find_splice_pair(system.map, 0.05, 0.01)
    return system, pair, splice_pseudo_orbit(system, pair, 0.01)


def test_cat_map_eigenvalues(cat_map):
    e = cat_map.eigen()
    assert e.lambda_u == pytest.approx(2.618034, abs=1e-6)
    assert e.lambda_u * e.lambda_s == pytest.approx(1.0)
    assert e.lambda_u ** 5 == pytest.approx(122.99, abs=0.01)
    assert e.lambda_s ** 20 < 5e-9
    assert cat_map.eigenvalue_product() == 1


def test_cat_map_on_points(cat_map):
    assert cat_map((0.5, 0.5)) == (0.5, 0.0)
    assert cat_map((0.0, 0.0)) == (0.0, 0.0)
    p = (Fraction(1, 3), Fraction(1, 5))
    assert cat_map.inverse(cat_map(p)) == p


def test_non_hyperbolic_matrices_are_rejected():
    with pytest.raises(DomainError):
        ToralAutomorphism(((1, 1), (0, 1)))
    with pytest.raises(DomainError):
        ToralAutomorphism(((2, 0), (0, 1)))
    identity = ToralAutomorphism(((1, 0), (0, 1)), require_hyperbolic=False)
    assert not identity.is_hyperbolic
    with pytest.raises(DomainError):
        identity.eigen()


def test_local_continua(cat_map):
    e = cat_map.eigen()
    S = local_stable_continuum(cat_map, (0.3, 0.4), 0.1)
    U = local_unstable_continuum(cat_map, (0.3, 0.4), 0.1)
    assert S.length == pytest.approx(0.1)
    assert S.image(cat_map).length == pytest.approx(0.1 * e.lambda_s)
    assert U.image(cat_map).length == pytest.approx(0.1 * e.lambda_u)
    with pytest.raises(ContractError):
        local_stable_continuum(cat_map, (0.3, 0.4), 0.25)


def test_segment_validation():
    with pytest.raises(DomainError):
        TorusSegment((0.0, 0.0), (1.0, 1.0), 0.1)
    with pytest.raises(DomainError):
        TorusSegment((0.0, 0.0), (1.0, 0.0), -1.0)


def test_cell_images_keep_area(cat_map):
    assert cell_image_area(cat_map, (0.2, 0.7), 0.01) == pytest.approx(1e-4)


@pytest.mark.slow
def test_splice_pair_within_delta(splice):
    system, pair, orbit = splice
    assert 1 <= pair.k_n <= 25
    assert pair.distance + pair.spacing < 0.01
    assert orbit.jump < 0.01
    assert orbit.window == pair.k_n + 6
    lengths = orbit.lengths()
    assert lengths[0] == pytest.approx(0.05 * system.map.eigen().lambda_u ** pair.k_n)


@pytest.mark.slow
def test_refutation_over_a_family_slice(splice):
    system, _, orbit = splice
    family = default_family(system.map)
    assert len(family) == 10_000
    result = refute_shadowing(system, orbit, 0.05, family=family[::50])
    assert len(result.rows) == 200
    assert result.report.verdict in (Verdict.REFUTED, Verdict.NOT_SHADOWED_IN_FAMILY)
    assert result.to_csv().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_dichotomy_probe(cat_map):
    e = cat_map.eigen()
    C = TorusSegment((0.1, 0.2), e.v_u, 0.005)
    report = diameter_dichotomy_probe(cat_map, C, 0.01, 0.1, 40)
    assert report.passed
    assert report.details["first_exceed"] is not None
    with pytest.raises(ContractError):
        diameter_dichotomy_probe(cat_map, TorusSegment((0.1, 0.2), e.v_u, 0.5), 0.01, 0.1, 40)


def test_dichotomy_sweep(cat_map):
    report = dichotomy_sweep(cat_map, count=100, delta=0.01, eps=0.1, N=40)
    assert report.passed
    assert report.checked == 100


def test_transitivity(cat_map):
    U = TorusBall((0.1, 0.1), 0.05)
    V = TorusBall((0.7, 0.3), 0.05)
    result = transitivity_probe(cat_map, U, V, 20)
    assert result.n is not None and result.n <= 20
    assert result.n_positive is not None

    identity = ToralAutomorphism(((1, 0), (0, 1)), require_hyperbolic=False)
    assert transitivity_probe(identity, U, V, 20).n is None


def test_dynamical_ball_shrinks_to_the_point(cat_map):
    x = (0.3, 0.6)
    ball = dynamical_ball(cat_map, x, 0.1, 10)
    assert len(ball) >= 1
    assert all(cat_map.space.distance(p, x) < 1e-3 for p in ball.points)

    full = dynamical_ball(cat_map, x, 0.1, 0)
    identity = ToralAutomorphism(((1, 0), (0, 1)), require_hyperbolic=False)
    assert len(dynamical_ball(identity, x, 0.1, 10)) == len(full)
    assert len(full) > len(ball)
    with pytest.raises(ContractError):
        dynamical_ball(cat_map, x, 0.3, 1)


def test_local_product(cat_map):
    x = (0.3, 0.6)
    assert local_product_point(cat_map, x, x, 0.05) == pytest.approx(x)
    y = (0.31, 0.605)
    p = local_product_point(cat_map, x, y, 0.05)
    assert p is not None
    e = cat_map.eigen()
    # p − x is unstable, y − p is stable
    d1 = np.asarray(p) - np.asarray(x)
    d2 = np.asarray(y) - np.asarray(p)
    assert abs(d1[0] * e.v_u[1] - d1[1] * e.v_u[0]) < 1e-9
    assert abs(d2[0] * e.v_s[1] - d2[1] * e.v_s[0]) < 1e-9
    assert local_product_point(cat_map, x, (0.8, 0.1), 0.01) is None

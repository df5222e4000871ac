import pytest

from shadowlab import hyperspace
from shadowlab.constructions import make_tent_system
from shadowlab.core.errors import ContractError, DomainError
from shadowlab.dendrite import complex_of, make_subtree
from shadowlab.hyperspace import (
    ContinuumPseudoOrbit,
    connected_cover,
    continuum_shadow,
    continuum_threshold,
    exhaustive_continuum_oracle,
    fatten,
    generate_continuum_pseudo_orbit,
    hausdorff_subtrees,
    induced_image,
    map_modulus,
    verify_continuum_shadow,
)


@pytest.fixture
def interval_complex(square_system):
    """Provides the complex of [0, 1]."""
    return complex_of(square_system.space)


def test_induced_image_of_an_interval(square_system, interval_complex):
    image = induced_image(make_subtree(interval_complex, [(0, 0.5, 0.7)]), square_system)
    (_, t0, t1), = image.intervals
    assert (t0, t1) == pytest.approx((0.25, 0.49))


def test_hausdorff_between_intervals(interval_complex):
    A = make_subtree(interval_complex, [(0, 0.0, 0.5)])
    B = make_subtree(interval_complex, [(0, 0.25, 0.75)])
    assert hausdorff_subtrees(A, B, 0.001) == pytest.approx(0.25, abs=0.002)
    assert hausdorff_subtrees(A, A, 0.001) == 0.0


def test_generated_continuum_pseudo_orbit_is_valid(square_system, interval_complex, rng):
    K0 = make_subtree(interval_complex, [(0, 0.4, 0.6)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, 0.02, 10, rng)
    assert cpo.n_steps == 10
    assert max(cpo.jumps) < 0.02 + cpo.spacing
    assert cpo.to_dict()["delta"] == 0.02


def test_continuum_pseudo_orbit_rejects_large_jumps(square_system, interval_complex):
    A = make_subtree(interval_complex, [(0, 0.5, 0.7)])
    B = make_subtree(interval_complex, [(0, 0.9, 1.0)])
    with pytest.raises(DomainError):
        ContinuumPseudoOrbit((A, B), 0.01, square_system)


def test_cover_elements_are_small(interval_complex):
    cover = connected_cover(interval_complex, 0.1)
    assert cover.lebesgue > 0.0
    assert 2.0 * cover.radius < 0.1 / 4.0
    assert all(cover.element(i).length() <= 2.0 * cover.radius + 1e-12 for i in range(len(cover)))


def test_fatten_contains_the_continuum(interval_complex):
    cover = connected_cover(interval_complex, 0.1)
    K = make_subtree(interval_complex, [(0, 0.4, 0.5)])
    L = fatten(K, cover)
    assert L.is_connected()
    (_, t0, t1), = L.intervals
    assert t0 < 0.4 and t1 > 0.5


def test_true_continuum_orbit_shadows_itself(square_system, interval_complex):
    K0 = make_subtree(interval_complex, [(0, 0.3, 0.8)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, 0.0, 8)
    assert verify_continuum_shadow(square_system, K0, cpo, 1e-6).shadowed


def test_square_continuum_shadowing(square_system, interval_complex, rng):
    eps = 0.1
    delta = continuum_threshold(square_system, eps, interval_complex)["delta"]
    K0 = make_subtree(interval_complex, [(0, 0.4, 0.6)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, delta, 15, rng)
    result = continuum_shadow(square_system, cpo, eps)
    assert result.shadowed
    assert result.anchors > 0
    assert result.report.max_distance < eps


def test_identity_constant_orbit_is_shadowed(identity_system):
    cx = complex_of(identity_system.space)
    K0 = make_subtree(cx, [(0, 0.2, 0.3)])
    cpo = ContinuumPseudoOrbit((K0,) * 6, 0.0, identity_system)
    result = continuum_shadow(identity_system, cpo, 0.1)
    assert result.shadowed
    assert K0.intervals[0][1] >= result.continuum.intervals[0][1]


def test_continuum_shadowing_needs_a_monotone_map():
    tent = make_tent_system()
    cx = complex_of(tent.space)
    K0 = make_subtree(cx, [(0, 0.2, 0.3)])
    cpo = ContinuumPseudoOrbit((K0,), 0.0, tent)
    with pytest.raises(ContractError):
        continuum_shadow(tent, cpo, 0.1)


def test_oracle_agrees_on_a_true_orbit(square_system, interval_complex):
    K0 = make_subtree(interval_complex, [(0, 0.5, 0.7)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, 0.0, 5)
    found, witness = exhaustive_continuum_oracle(square_system, cpo, 0.1)
    assert found
    assert verify_continuum_shadow(square_system, witness, cpo, 0.1).shadowed


@pytest.mark.slow
def test_star_continuum_shadowing(three_star, three_star_complex, rng):
    eps = 0.2
    delta = continuum_threshold(three_star, eps, three_star_complex)["delta"]
    K0 = make_subtree(three_star_complex, [(0, 0.0, 0.5), (1, 0.0, 0.5)])
    cpo = generate_continuum_pseudo_orbit(three_star, K0, delta, 10, rng)
    assert continuum_shadow(three_star, cpo, eps).shadowed


def test_threshold_keeps_a_jump_and_its_image_inside_the_lebesgue_number(square_system, interval_complex):
    th = continuum_threshold(square_system, 0.1, interval_complex)
    assert th["delta"] + th["modulus"] < th["lebesgue"]
    assert th["delta"] < 0.5 * th["lebesgue"]
    # f(x) = x² has slope 2 at the repeller
    assert th["modulus"] == pytest.approx(6.0 * th["delta"], rel=0.05)


def test_map_modulus_of_the_identity(identity_system):
    cx = complex_of(identity_system.space)
    assert map_modulus(identity_system, cx, 0.01) == pytest.approx(0.03)


def test_threshold_gives_up_on_a_wild_modulus(square_system, interval_complex, monkeypatch):
    monkeypatch.setattr("shadowlab.hyperspace.map_modulus", lambda system, cx, scale: 1.0)
    with pytest.raises(ContractError):
        continuum_threshold(square_system, 0.1, interval_complex)


@pytest.mark.parametrize("stage, reason", [
    ("preimage_subtree", "preimage of a fattened continuum is empty"),
    ("subtree_intersection", "shadowing intersection became empty"),
])
def test_continuum_shadow_reports_a_broken_construction(square_system, interval_complex, monkeypatch,
                                                        stage, reason):
    K0 = make_subtree(interval_complex, [(0, 0.4, 0.6)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, 0.0, 4)
    monkeypatch.setattr(f"shadowlab.hyperspace.{stage}", lambda *args: None)
    result = continuum_shadow(square_system, cpo, 0.1)
    assert not result.shadowed
    assert result.continuum is None
    assert result.report.details["reason"] == reason
    assert result.report.details["step"] == 3
    assert result.anchors > 0
    assert result.to_dict()["continuum"] is None


def test_continuum_shadow_reports_a_failed_verification(square_system, interval_complex, monkeypatch):
    K0 = make_subtree(interval_complex, [(0, 0.4, 0.6)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, 0.0, 4)
    strict = hyperspace.verify_continuum_shadow
    monkeypatch.setattr("shadowlab.hyperspace.verify_continuum_shadow",
                        lambda system, K, cpo, eps: strict(system, K, cpo, 0.0))
    result = continuum_shadow(square_system, cpo, 0.1)
    assert not result.shadowed
    assert result.anchors > 0
    assert result.report.details["reason"] == "constructed continuum does not shadow"


def test_oracle_finds_a_witness_that_is_not_near_the_ends_of_k0(square_system, interval_complex):
    # K₀ is a point but the next continuum is an arc, so the witness must be an arc
    K0 = make_subtree(interval_complex, [(0, 0.5, 0.5)])
    K1 = make_subtree(interval_complex, [(0, 0.2, 0.3)])
    cpo = ContinuumPseudoOrbit((K0, K1), 0.06, square_system)
    found, witness = exhaustive_continuum_oracle(square_system, cpo, 0.04)
    assert found
    assert not witness.is_point()
    assert verify_continuum_shadow(square_system, witness, cpo, 0.04).shadowed


def test_oracle_rejects_an_oversized_instance(square_system, interval_complex):
    K0 = make_subtree(interval_complex, [(0, 0.3, 0.7)])
    cpo = generate_continuum_pseudo_orbit(square_system, K0, 0.0, 2)
    with pytest.raises(ContractError):
        exhaustive_continuum_oracle(square_system, cpo, 0.5, spacing=0.002)

import json

import numpy as np
import pytest

from shadowlab.constructions import (
    build_universal_stage,
    make_n_star,
    make_square_comb,
    make_star_bridge,
    make_three_fixed_system,
    sample_points,
)
from shadowlab.core.errors import ContractError, DomainError
from shadowlab.core.structs import Verdict
from shadowlab.metric import build_eps_net
from shadowlab.shadowing import (
    PseudoOrbit,
    estimate_modulus,
    generate_pseudo_orbit,
    pseudo_orbit_to_csv,
    report_to_json,
    sample_ball,
    search_shadow_point,
    simple_shadow_point,
    simple_shadow_threshold,
    true_orbit,
    verify_shadow,
)


def test_true_orbit_shadows_itself(square_system):
    po = true_orbit(square_system, 0.8, 20)
    report = verify_shadow(square_system, 0.8, po, 1e-9)
    assert report.shadowed
    assert report.max_distance == 0.0
    assert po.max_gap == 0.0


def test_pseudo_orbit_rejects_large_jumps(square_system):
    with pytest.raises(DomainError):
        PseudoOrbit((0.5, 0.9), 0.01, square_system)


def test_generated_jumps_stay_below_delta(square_system, rng):
    po = generate_pseudo_orbit(square_system, 0.7, 0.01, 50, rng)
    assert po.n_steps == 50
    assert po.max_gap < 0.01


def test_two_sided_pseudo_orbit(square_system, rng):
    po = generate_pseudo_orbit(square_system, 0.5, 0.01, 10, rng, two_sided=True)
    assert po.origin == 10
    assert list(po.steps) == list(range(-10, 11))
    assert po.at(0) == 0.5


def test_sample_ball_stays_inside(three_star, rng):
    centre = three_star.space.center
    for _ in range(20):
        assert three_star.space.distance(centre, sample_ball(three_star.space, centre, 0.1, rng)) < 0.1


def test_identity_drift_is_not_shadowed(identity_system):
    po = generate_pseudo_orbit(identity_system, 0.0, 0.01, 100, mode="drift")
    assert po.at(100) == pytest.approx(0.5)
    report = search_shadow_point(identity_system, po, 0.1)
    assert not report.shadowed
    assert report.verdict is Verdict.NOT_SHADOWED_IN_FAMILY


def test_square_pseudo_orbit_has_a_witness(square_system, rng):
    po = generate_pseudo_orbit(square_system, 0.9, 1e-4, 40, rng)
    net = build_eps_net(square_system.space, 0.025)
    report = search_shadow_point(square_system, po, 0.05, net)
    assert report.shadowed
    assert verify_shadow(square_system, report.witness, po, 0.05).shadowed


def test_search_rejects_a_coarse_net(square_system):
    po = true_orbit(square_system, 0.5, 5)
    with pytest.raises(ContractError):
        search_shadow_point(square_system, po, 0.05, build_eps_net(square_system.space, 0.05))


def test_constructive_shadower(square_system, rng):
    cert = simple_shadow_threshold(square_system, 0.1)
    assert 1e-8 < cert.delta <= cert.grid_spacing
    assert cert.radius < 0.1 / 4.0
    assert cert.forward_budget < cert.eta
    assert cert.inverse_modulus < cert.eta
    assert len(cert.moduli) == cert.escape_steps
    po = generate_pseudo_orbit(square_system, 0.95, cert.delta, 60, rng)
    y = simple_shadow_point(square_system, po, 0.1, cert)
    assert verify_shadow(square_system, y, po, 0.1).shadowed


def test_threshold_scales_with_epsilon(square_system):
    coarse = simple_shadow_threshold(square_system, 0.1)
    fine = simple_shadow_threshold(square_system, 0.05)
    assert 1e-8 < fine.delta < coarse.delta
    # f⁻¹ = √x is steepest at the attractor
    assert fine.inverse_modulus == pytest.approx(2.0 * np.sqrt(fine.delta), rel=0.05)


def test_threshold_gives_up_when_the_schedule_runs_out(square_system, monkeypatch):
    monkeypatch.setattr("shadowlab.shadowing.DELTA_SCHEDULE", 0)
    with pytest.raises(ContractError):
        simple_shadow_threshold(square_system, 0.1)


def test_pull_back_starts_at_first_exit_from_repeller_preimage(square_system):
    cert = simple_shadow_threshold(square_system, 0.1)
    # 0.985 lies in U_Q, but its image does not
    assert abs(1.0 - 0.985) < cert.radius < abs(1.0 - 0.985 ** 2)
    po = true_orbit(square_system, 0.985, 30)
    assert simple_shadow_point(square_system, po, 0.1, cert) == 0.985

    po = true_orbit(square_system, 0.995, 30)
    assert simple_shadow_point(square_system, po, 0.1, cert) == pytest.approx(0.995, abs=1e-9)


def test_constructive_shadower_refuses_large_delta(square_system, rng):
    cert = simple_shadow_threshold(square_system, 0.1)
    po = generate_pseudo_orbit(square_system, 0.5, 4.0 * cert.delta, 5, rng)
    with pytest.raises(ContractError):
        simple_shadow_point(square_system, po, 0.1, cert)


def test_constructive_shadower_needs_a_homeomorphism():
    from shadowlab.constructions import make_tent_system

    with pytest.raises(ContractError):
        simple_shadow_threshold(make_tent_system(), 0.1)


def test_stage_comb_is_shadowed_through_its_exact_map(stage_comb, rng):
    system = stage_comb.system
    space = system.space
    cert = simple_shadow_threshold(system, 0.1, grid_divisions=8)
    assert cert.exact_map
    assert 1e-8 < cert.delta <= cert.grid_spacing

    exact = system.exact()
    x0 = space.point_on(("tooth", space.materialized[0], 0), 0.5)
    po = generate_pseudo_orbit(exact, x0, cert.delta, 30, rng)
    assert any(space.retract(x) != x for x in po.points)
    y = simple_shadow_point(system, po, 0.1, cert)
    assert verify_shadow(exact, y, po, 0.1).shadowed


def test_approximant_pseudo_orbit_is_revalidated_for_the_exact_map(stage_comb, rng):
    system = stage_comb.system
    space = system.space
    cert = simple_shadow_threshold(system, 0.1, grid_divisions=8)
    x0 = space.point_on(("tooth", space.materialized[0], 0), 0.5)
    # the approximant collapses the image tooth, the exact map does not
    po = generate_pseudo_orbit(system, x0, cert.delta, 5, rng)
    with pytest.raises(DomainError):
        simple_shadow_point(system, po, 0.1, cert)


@pytest.mark.slow
def test_square_comb_threshold():
    cert = simple_shadow_threshold(make_square_comb(), 0.05)
    assert cert.exact_map
    assert cert.delta > 1e-8


CONSTRUCTIVE_SYSTEMS = {
    "three-fixed": make_three_fixed_system,
    "star": lambda: make_n_star(3),
    "bridge": lambda: make_star_bridge(3),
    "stage-comb": lambda: build_universal_stage(3, 1, 8, seed=0)[1].system,
}


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(CONSTRUCTIVE_SYSTEMS))
def test_constructive_point_shadows_seeded_pseudo_orbits(name):
    system = CONSTRUCTIVE_SYSTEMS[name]()
    exact = system.exact()
    eps = 0.1
    cert = simple_shadow_threshold(system, eps, grid_divisions=16)
    assert cert.delta > 1e-8
    net = build_eps_net(exact.space, eps / 2.0)
    rng = np.random.default_rng(7)
    for _ in range(500):
        x0 = sample_points(system.space, rng, 1)[0]
        po = generate_pseudo_orbit(exact, x0, cert.delta, 40, rng)
        y = simple_shadow_point(system, po, eps, cert)
        assert verify_shadow(exact, y, po, eps).shadowed
        assert search_shadow_point(exact, po, eps, net).shadowed


def test_square_modulus_is_positive(square_system):
    est = estimate_modulus(square_system, 0.05, trials=5, delta_grid=[1e-5, 1e-4], N=30, seed=3)
    assert est.delta in (1e-5, 1e-4)
    assert est.table[0]["passed"] == 5


def test_identity_modulus_is_empty(identity_system):
    est = estimate_modulus(identity_system, 0.1, trials=2, delta_grid=[0.01], N=100, generator="drift")
    assert est.delta is None
    assert est.table[0]["passed"] == 0


def test_modulus_grid_must_ascend(square_system):
    with pytest.raises(DomainError):
        estimate_modulus(square_system, 0.05, trials=1, delta_grid=[1e-3, 1e-4], N=5)


def test_csv_and_json_output(square_system):
    po = true_orbit(square_system, 0.5, 3)
    lines = pseudo_orbit_to_csv(po).splitlines()
    assert lines[0] == "step,x,gap"
    assert len(lines) == 5
    assert lines[-1].endswith(",")

    data = json.loads(report_to_json(verify_shadow(square_system, 0.5, po, 0.1)))
    assert data["verdict"] == "shadowed"
    assert np.isclose(data["max_distance"], 0.0)

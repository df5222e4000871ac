"""
SHADOWLAB Runner
Factories for systems and random streams, and the experiment harness behind
the CLI: one function per experiment kind, each returning a result document
plus artifact texts that ``run_experiment`` writes deterministically.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from shadowlab import __version__
from shadowlab.anosov import (
    DEFAULT_POINT,
    TorusBall,
    diameter_dichotomy_probe,
    dichotomy_sweep,
    dynamical_ball,
    find_splice_pair,
    local_product_point,
    local_stable_continuum,
    local_unstable_continuum,
    refute_shadowing,
    splice_pseudo_orbit,
    transitivity_probe,
)
from shadowlab.config import ExperimentConfig, SystemSpec
from shadowlab.constructions import (
    DynamicalSystem,
    SimpleSystem,
    build_system,
    build_universal_stage,
    check_bonding_commutes,
    is_simple,
    sample_points,
    stage_density_radius,
    verify_stage,
)
from shadowlab.core.errors import ConfigError, ContractError, InvariantViolation, ShadowLabError
from shadowlab.core.logging_config import log_summary
from shadowlab.core.metrics import metrics_manager
from shadowlab.core.structs import ExperimentKind, SpaceKind, Verdict, jsonable
from shadowlab.database import DatabaseManager
from shadowlab.dendrite import complex_of, dump_dendrite
from shadowlab.hyperspace import (
    connected_cover,
    continuum_shadow,
    continuum_threshold,
    exhaustive_continuum_oracle,
    generate_continuum_pseudo_orbit,
)
from shadowlab.render import TorusScene, dump_scene, render_dendrite, render_torus
from shadowlab.shadowing import (
    estimate_modulus,
    generate_pseudo_orbit,
    pseudo_orbit_to_csv,
    search_shadow_point,
    simple_shadow_point,
    simple_shadow_threshold,
    verify_shadow,
)

logger = logging.getLogger("shadowlab.runner")

REPORT_SCHEMA = "shadowlab.report/1"
DEFAULT_DELTA_GRID = (1e-4, 1e-3, 1e-2)
DEFAULT_ANOSOV_DELTA = 0.01
ORACLE_EDGE_LIMIT = 8
ORACLE_TRIALS = 3
# side stream for example orbits, disjoint from the per-trial streams
EXAMPLE_STREAM = 0x5EED

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


@dataclass
class ExperimentOutput:
    result: Dict[str, Any]
    verdict: Optional[str] = None
    passed: bool = True
    error_budget: Dict[str, Any] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)


@dataclass
class RunOutcome:
    exit_status: int
    report: Dict[str, Any]
    artifacts: Dict[str, Path] = field(default_factory=dict)
    output_dir: Optional[Path] = None


# ─── Factories ────────────────────────────────────────────

def create_system(spec: SystemSpec) -> DynamicalSystem:
    """Factory: build a registered system from its spec."""
    return build_system(spec.builder, spec.params)


def create_rng_streams(seed: int, count: int) -> List[np.random.Generator]:
    """Independent generators split from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def create_example_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, EXAMPLE_STREAM]))


def create_database(url: Optional[str] = None) -> DatabaseManager:
    db = DatabaseManager(url)
    db.init_db()
    return db


# ─── Experiments ──────────────────────────────────────────

def _orbit_svg(system: DynamicalSystem, points: List[Any], title: str) -> str:
    if system.space.kind is SpaceKind.TORUS:
        pts = [(float(p[0]), float(p[1])) for p in points]
        return render_torus(TorusScene(points=[("pseudo-orbit", pts)], title=title)).svg
    cx = complex_of(system.space)
    return render_dendrite(cx, labels={"pseudo-orbit": [cx.locate(p) for p in points]}, title=title).svg


def run_shadow(config: ExperimentConfig) -> ExperimentOutput:
    """Shadowing modulus on a δ grid, plus one example orbit and its shadow."""
    system = create_system(config.system)
    eps = config.epsilon
    grid = [config.delta] if config.delta else (config.delta_grid or list(DEFAULT_DELTA_GRID))
    estimate = estimate_modulus(system, eps, config.trials, grid, config.steps, config.seed,
                                config.generator, config.mesh)

    rng = create_example_rng(config.seed)
    delta = estimate.delta or grid[0]
    x0 = sample_points(system.space, rng, 1)[0]
    po = generate_pseudo_orbit(system, x0, delta, config.steps, rng, mode=config.generator)
    example = search_shadow_point(system, po, eps)
    result: Dict[str, Any] = {
        "system": system.to_dict(),
        "modulus": estimate.to_dict(),
        "example": example.to_dict(),
    }

    if isinstance(system, SimpleSystem) and system.exact().is_homeomorphism:
        exact = system.exact()
        cert = simple_shadow_threshold(system, eps)
        po_c = generate_pseudo_orbit(exact, x0, cert.delta, config.steps, rng)
        y = simple_shadow_point(system, po_c, eps, cert)
        result["constructive"] = {
            "certificate": cert.to_dict(),
            "report": verify_shadow(exact, y, po_c, eps).to_dict(),
        }

    files = {"pseudo_orbit.csv": pseudo_orbit_to_csv(po)}
    if config.render:
        files["orbit.svg"] = _orbit_svg(system, list(po.points), f"δ = {delta:g}")
    verdict = Verdict.SHADOWED if estimate.delta is not None else Verdict.NOT_SHADOWED_IN_FAMILY
    budget = {"mesh": config.mesh or eps / 2.0, "example": example.error_budget}
    return ExperimentOutput(result, verdict.value, True, budget, files)


def run_hyper_shadow(config: ExperimentConfig) -> ExperimentOutput:
    """Continuum pseudo-orbits on a monotone dendrite system and their constructed shadows."""
    system = create_system(config.system)
    eps = config.epsilon
    cx = complex_of(system.space)
    cover = connected_cover(cx, eps)
    threshold = continuum_threshold(system, eps, cover=cover)
    delta = config.delta or threshold["delta"]
    use_oracle = len(cx.edges) <= ORACLE_EDGE_LIMIT

    rows = []
    first = None
    for t, rng in enumerate(create_rng_streams(config.seed, config.trials)):
        K0 = cx.random_subtree(rng)
        cpo = generate_continuum_pseudo_orbit(system, K0, delta, config.steps, rng)
        res = continuum_shadow(system, cpo, eps, cover)
        row = {"trial": t, "shadowed": res.shadowed, "max_distance": res.report.max_distance, "anchors": res.anchors}
        if use_oracle and t < ORACLE_TRIALS:
            try:
                row["oracle"], _ = exhaustive_continuum_oracle(system, cpo, eps)
            except ContractError as e:
                logger.warning(f"oracle skipped on trial {t}: {e}")
        rows.append(row)
        if first is None and res.shadowed:
            first = (K0, res.continuum)

    shadowed = sum(r["shadowed"] for r in rows)
    result = {
        "system": system.to_dict(),
        "delta": delta,
        "threshold": threshold,
        "cover": cover.to_dict(),
        "trials": len(rows),
        "shadowed": shadowed,
        "max_distance": max((r["max_distance"] for r in rows), default=0.0),
        "rows": rows,
    }
    if use_oracle:
        checked = [r for r in rows if "oracle" in r]
        result["oracle_agreement"] = {"checked": len(checked), "agree": sum(r["oracle"] == r["shadowed"] for r in checked)}

    lines = ["trial,shadowed,max_distance,anchors" + (",oracle" if use_oracle else "")]
    for r in rows:
        cells = [str(r["trial"]), str(int(r["shadowed"])), repr(r["max_distance"]), str(r["anchors"])]
        if use_oracle:
            cells.append(str(int(r["oracle"])) if "oracle" in r else "")
        lines.append(",".join(cells))
    files = {"trials.csv": "\n".join(lines) + "\n"}
    if config.render and first is not None:
        files["continuum.svg"] = render_dendrite(cx, highlights=list(first), title="K₀ and its shadow").svg

    verdict = Verdict.SHADOWED if shadowed == len(rows) else Verdict.NOT_SHADOWED_IN_FAMILY
    budget = {"lebesgue": cover.lebesgue, "grid_spacing": cover.grid_spacing}
    return ExperimentOutput(result, verdict.value, True, budget, files)


def run_anosov_refute(config: ExperimentConfig) -> ExperimentOutput:
    """Splice S_n and U_n into a continuum pseudo-orbit and refute shadowing over the default family."""
    system = create_system(config.system)
    T = system.map
    eps = config.epsilon
    delta = config.delta or DEFAULT_ANOSOV_DELTA
    pair = find_splice_pair(T, eps, delta, k_max=config.k_max)
    orbit = splice_pseudo_orbit(system, pair, delta, window=config.window)
    refutation = refute_shadowing(system, orbit, eps, workers=config.workers)

    scene = TorusScene(
        segments=[("S", pair.stable.segment), ("U", pair.unstable.segment)],
        title=f"S and U, k_n = {pair.k_n}",
    )
    files = {"candidates.csv": refutation.to_csv(), "scene.json": dump_scene(scene)}
    if config.render:
        files["torus.svg"] = render_torus(scene).svg
    result = {"splice": orbit.to_dict(), "refutation": refutation.report.to_dict()}
    return ExperimentOutput(result, refutation.report.verdict.value, True,
                            refutation.report.error_budget, files)


def run_dichotomy(config: ExperimentConfig) -> ExperimentOutput:
    system = create_system(config.system)
    T = system.map
    delta = config.delta or 0.01
    sweep = dichotomy_sweep(T, config.trials, delta, config.epsilon, config.steps, config.seed)
    probes = {
        kind: diameter_dichotomy_probe(T, build(T, DEFAULT_POINT, delta), delta, config.epsilon, config.steps).to_dict()
        for kind, build in (("stable", local_stable_continuum), ("unstable", local_unstable_continuum))
    }
    result = {"sweep": sweep.to_dict(), "eigendirections": probes}
    return ExperimentOutput(result, None, sweep.passed, {"diameters": "closed-form"})


def run_transitivity(config: ExperimentConfig) -> ExperimentOutput:
    """Transitivity hit times, plus the expansiveness and local-product probes at ε."""
    system = create_system(config.system)
    T = system.map
    reg = config.regions
    hit = transitivity_probe(T, TorusBall(reg.u_center, reg.radius), TorusBall(reg.v_center, reg.radius), config.steps)
    result: Dict[str, Any] = {"transitivity": hit.to_dict()}
    c = min(config.epsilon, 0.2)
    if T.is_hyperbolic:
        ball = dynamical_ball(T, DEFAULT_POINT, c, min(config.steps, 10))
        spread = max(system.space.distance(DEFAULT_POINT, p) for p in ball.points)
        near = (DEFAULT_POINT[0] + c / 4.0, DEFAULT_POINT[1] - c / 5.0)
        result["dynamical_ball"] = {"c": c, "N": min(config.steps, 10), "points": len(ball), "spread": spread}
        result["local_product"] = jsonable(local_product_point(T, DEFAULT_POINT, near, c))
    return ExperimentOutput(result, None, True, {"grid": c / 25.0})


def run_universal_dendrite(config: ExperimentConfig) -> ExperimentOutput:
    """Staged universal dendrite with its invariant suite."""
    spec = config.universal
    stages = build_universal_stage(spec.n, spec.K, spec.m, config.seed, teeth=spec.teeth)
    checks = [verify_stage(stages, k, spec.n) for k in range(1, spec.K + 1)]
    checks.append(check_bonding_commutes(stages, samples=config.trials, seed=config.seed))
    top = stages[-1]
    checks.append(is_simple(top.system, samples=min(config.trials, 200), seed=config.seed))
    radii = [stage_density_radius(stages, k) for k in range(1, spec.K + 1)]
    decreasing = all(b < a for a, b in zip(radii, radii[1:]))
    passed = all(c.passed for c in checks) and decreasing

    result = {
        "stages": [s.to_dict() for s in stages],
        "checks": [c.to_dict() for c in checks],
        "density_radii": radii,
        "density_decreasing": decreasing,
    }
    labels = top.labels()
    files = {"dendrite.json": dump_dendrite(top.complex, labels, jsonable(top.system.to_dict()))}
    if config.render:
        files["dendrite.svg"] = render_dendrite(top.complex, labels=labels, title=f"stage {top.k}").svg
    return ExperimentOutput(result, None, passed, {"density_spacing": 0.005}, files)


EXPERIMENTS: Dict[ExperimentKind, Callable[[ExperimentConfig], ExperimentOutput]] = {
    ExperimentKind.SHADOW: run_shadow,
    ExperimentKind.HYPER_SHADOW: run_hyper_shadow,
    ExperimentKind.ANOSOV_REFUTE: run_anosov_refute,
    ExperimentKind.DICHOTOMY: run_dichotomy,
    ExperimentKind.TRANSITIVITY: run_transitivity,
    ExperimentKind.UNIVERSAL_DENDRITE: run_universal_dendrite,
}


# ─── Harness ──────────────────────────────────────────────

def report_document(config: ExperimentConfig, output: ExperimentOutput) -> Dict[str, Any]:
    return {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "kind": config.kind.value,
        "seed": config.seed,
        "config": config.canonical(),
        "config_hash": config.config_hash(),
        "verdict": output.verdict,
        "passed": output.passed,
        "error_budget": jsonable(output.error_budget),
        "result": jsonable(output.result),
    }


def dump_report(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_artifacts(out_dir: Path, files: Dict[str, str]) -> Dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, text in sorted(files.items()):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written[name] = path
    return written


def run_experiment(config: ExperimentConfig, db: Optional[DatabaseManager] = None) -> RunOutcome:
    """
    Run one experiment and write ``report.json`` plus its artifacts to
    ``<output_dir>/<kind>-<config hash>/``. Identical configs give identical
    bytes. Errors propagate to the caller after the ledger entry is made.
    """
    started = time.perf_counter()
    out_dir = config.resolved_output_dir() / f"{config.kind.value}-{config.config_hash()}"
    ledger = db if db is not None else (create_database() if config.ledger else None)
    try:
        output = EXPERIMENTS[config.kind](config)
    except ShadowLabError as e:
        if ledger is not None:
            ledger.record_run(config.kind.value, config.config_hash(), config.seed,
                              exit_status=exit_status_for(e), summary=e.to_dict())
        raise

    doc = report_document(config, output)
    artifacts = write_artifacts(out_dir, {"report.json": dump_report(doc), **output.files})
    status = EXIT_OK if output.passed else EXIT_INVARIANT
    elapsed = time.perf_counter() - started
    metrics_manager.record_experiment_latency(config.kind.value, elapsed)
    log_summary(
        logger, f"{config.kind.value} finished in {elapsed:.2f}s",
        kind=config.kind.value, seed=config.seed, verdict=output.verdict,
        passed=output.passed, error_budget=jsonable(output.error_budget),
    )
    if ledger is not None:
        ledger.record_run(config.kind.value, config.config_hash(), config.seed, output.verdict,
                          status, str(artifacts["report.json"]), {"passed": output.passed})
    return RunOutcome(status, doc, artifacts, out_dir)


def run_construct(spec: SystemSpec, output_dir: Path, render: bool = True) -> RunOutcome:
    """Build a system, write its dendrite file and a construction report."""
    system = create_system(spec)
    if system.space.kind is SpaceKind.TORUS:
        raise ContractError("construct writes dendrite files; the torus has none", {"builder": spec.builder})
    cx = complex_of(system.space)
    result: Dict[str, Any] = {
        "system": system.to_dict(),
        "vertices": cx.n_vertices,
        "edges": len(cx.edges),
        "leaves": len(cx.leaves()),
        "total_length": cx.total_length,
    }
    labels = {}
    if isinstance(system, SimpleSystem):
        labels = {"p": [cx.locate(system.p)], "q": [cx.locate(system.q)]}
        if system.is_homeomorphism:
            result["simple"] = is_simple(system).to_dict()
    doc = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "kind": "construct",
        "system": spec.model_dump(mode="json"),
        "result": jsonable(result),
    }
    files = {"report.json": dump_report(doc), "dendrite.json": dump_dendrite(cx, labels, jsonable(system.to_dict()))}
    if render:
        files["dendrite.svg"] = render_dendrite(cx, labels=labels, title=spec.builder).svg
    out_dir = Path(output_dir) / f"construct-{spec.builder}"
    return RunOutcome(EXIT_OK, doc, write_artifacts(out_dir, files), out_dir)


def exit_status_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, InvariantViolation):
        return EXIT_INVARIANT
    return EXIT_DOMAIN

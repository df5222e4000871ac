import json

import pytest

from shadowlab.cli import build_parser, main
from shadowlab.database import DatabaseManager


def _report(root, kind):
    (path,) = sorted(root.glob(f"{kind}-*/report.json"))
    return path


def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "shadowlab" in capsys.readouterr().out


def test_every_experiment_has_a_subcommand():
    parser = build_parser()
    for kind in ("shadow", "hyper-shadow", "anosov-refute", "dichotomy", "transitivity", "universal-dendrite"):
        assert parser.parse_args([kind, "-e", "0.1"]).command == kind


def test_shadow_run_is_byte_identical(output_dir):
    argv = ["shadow", "-e", "0.05", "-s", "square", "--seed", "42", "--trials", "3", "-N", "20",
            "--delta-grid", "1e-5,1e-4"]
    assert main(argv) == 0
    report = _report(output_dir, "shadow")
    first = report.read_bytes()
    csv_first = (report.parent / "pseudo_orbit.csv").read_bytes()
    assert (report.parent / "orbit.svg").exists()

    assert main(argv) == 0
    assert report.read_bytes() == first
    assert (report.parent / "pseudo_orbit.csv").read_bytes() == csv_first

    doc = json.loads(first)
    assert doc["kind"] == "shadow"
    assert doc["seed"] == 42
    assert doc["verdict"] == "shadowed"
    assert "constructive" in doc["result"]


def test_identity_drift_is_reported_unshadowed(output_dir):
    argv = ["shadow", "-e", "0.1", "-s", "identity", "-d", "0.01", "-N", "100", "--trials", "2",
            "--generator", "drift", "--no-render"]
    assert main(argv) == 0
    doc = json.loads(_report(output_dir, "shadow").read_text())
    assert doc["verdict"] == "not-shadowed-in-family"
    assert doc["result"]["modulus"]["delta"] is None
    assert not list(output_dir.glob("shadow-*/orbit.svg"))


def test_missing_epsilon_is_a_config_error(output_dir, capsys):
    assert main(["shadow", "-s", "square"]) == 2
    assert "[FAIL]" in capsys.readouterr().err


def test_coarse_mesh_is_a_config_error(output_dir):
    assert main(["shadow", "-e", "0.05", "--mesh", "0.05"]) == 2


def test_unknown_builder_is_a_config_error(output_dir):
    assert main(["shadow", "-e", "0.05", "-s", "no-such-builder"]) == 2


def test_config_file_and_flags(tmp_path, output_dir):
    config = tmp_path / "dichotomy.json"
    config.write_text(json.dumps({"epsilon": 0.2, "delta": 0.01, "steps": 40, "trials": 20}))
    assert main(["dichotomy", "-c", str(config), "-e", "0.1", "--no-render"]) == 0
    doc = json.loads(_report(output_dir, "dichotomy").read_text())
    assert doc["config"]["epsilon"] == 0.1
    assert doc["config"]["trials"] == 20
    assert doc["passed"]


def test_local_defaults_file(tmp_path, output_dir, monkeypatch):
    (tmp_path / ".shadowlab.json").write_text(json.dumps({"defaults": {"seed": 7}, "transitivity": {"steps": 20}}))
    monkeypatch.setattr("shadowlab.cli.CONFIG_PATHS", [str(tmp_path / ".shadowlab.json")])
    assert main(["transitivity", "-e", "0.1"]) == 0
    doc = json.loads(_report(output_dir, "transitivity").read_text())
    assert doc["seed"] == 7
    hit = doc["result"]["transitivity"]
    assert hit["max_n"] == 20
    assert hit["n"] is not None


def test_ledger_records_runs(output_dir):
    assert main(["dichotomy", "-e", "0.1", "-d", "0.01", "-N", "40", "--trials", "10", "--ledger"]) == 0
    runs = DatabaseManager().runs("dichotomy")
    assert len(runs) == 1
    assert runs[0].exit_status == 0


def test_construct_and_render(output_dir, capsys):
    assert main(["construct", "n-star", "-p", "n=4"]) == 0
    target = output_dir / "construct-n-star"
    dendrite = target / "dendrite.json"
    doc = json.loads(dendrite.read_text())
    assert len(doc["edges"]) == 4
    assert (target / "dendrite.svg").exists()

    out = target / "again.svg"
    assert main(["render", str(dendrite), "-o", str(out)]) == 0
    assert out.read_text().lstrip().startswith("<?xml")
    assert "carriers" in capsys.readouterr().out


def test_construct_refuses_the_torus(output_dir):
    assert main(["construct", "toral"]) == 1


@pytest.mark.slow
def test_universal_dendrite_suite(output_dir):
    assert main(["universal-dendrite", "-e", "0.1", "--n", "3", "--K", "2", "--m", "8", "--trials", "100"]) == 0
    report = _report(output_dir, "universal-dendrite")
    doc = json.loads(report.read_text())
    assert doc["passed"]
    assert doc["result"]["density_decreasing"]
    assert (report.parent / "dendrite.json").exists()


def test_hyper_shadow_derives_delta_and_checks_the_oracle(output_dir):
    argv = ["hyper-shadow", "-e", "0.1", "-s", "square", "--trials", "3", "-N", "4", "--no-render"]
    assert main(argv) == 0
    result = json.loads(_report(output_dir, "hyper-shadow").read_text())["result"]
    threshold = result["threshold"]
    assert result["delta"] == threshold["delta"]
    assert threshold["delta"] + threshold["modulus"] < threshold["lebesgue"]
    agreement = result["oracle_agreement"]
    assert agreement["checked"] == 3
    assert 0 <= agreement["agree"] <= 3

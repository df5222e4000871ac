import json
from datetime import datetime, timedelta, timezone

import pytest

from shadowlab.config import load_config_file, merge_config, parse_config
from shadowlab.core.errors import ConfigError
from shadowlab.core.structs import ExperimentKind
from shadowlab.database import DatabaseManager


def test_minimal_config_fills_defaults():
    config = parse_config({"kind": "shadow", "epsilon": 0.05})
    assert config.kind is ExperimentKind.SHADOW
    assert config.system.builder == "square"
    assert config.steps == 100
    assert config.universal.n == 3


def test_default_system_follows_the_experiment():
    assert parse_config({"kind": "anosov-refute", "epsilon": 0.05}).system.builder == "toral"
    assert parse_config({"kind": "hyper-shadow", "epsilon": 0.1}).system.builder == "n-star"


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config({"kind": "shadow"})
    with pytest.raises(ConfigError):
        parse_config({"kind": "shadow", "epsilon": -1.0})
    with pytest.raises(ConfigError):
        parse_config({"kind": "no-such-kind", "epsilon": 0.1})
    with pytest.raises(ConfigError):
        parse_config({"kind": "shadow", "epsilon": 0.1, "epsilonn": 0.2})
    with pytest.raises(ConfigError):
        parse_config({"kind": "shadow", "epsilon": 0.1, "generator": "gaussian"})


def test_mesh_must_fit_the_tolerance():
    assert parse_config({"kind": "shadow", "epsilon": 0.05, "mesh": 0.025}).mesh == 0.025
    with pytest.raises(ConfigError) as info:
        parse_config({"kind": "shadow", "epsilon": 0.05, "mesh": 0.03})
    assert info.value.context["errors"]


def test_delta_grid_is_sorted():
    config = parse_config({"kind": "shadow", "epsilon": 0.05, "delta_grid": [1e-2, 1e-4, 1e-3]})
    assert config.delta_grid == [1e-4, 1e-3, 1e-2]


def test_config_hash_ignores_output_placement():
    a = parse_config({"kind": "shadow", "epsilon": 0.05, "seed": 1})
    b = parse_config({"kind": "shadow", "epsilon": 0.05, "seed": 1, "output_dir": "elsewhere", "ledger": True})
    c = parse_config({"kind": "shadow", "epsilon": 0.05, "seed": 2})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 16


def test_merge_config_layers():
    merged = merge_config(
        {"epsilon": 0.1, "universal": {"n": 4, "K": 3}},
        None,
        {"epsilon": 0.05, "delta": None, "universal": {"K": None, "m": 6}},
    )
    assert merged == {"epsilon": 0.05, "universal": {"n": 4, "K": 3, "m": 6}}


def test_load_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "dichotomy", "epsilon": 0.1}))
    assert load_config_file(path)["kind"] == "dichotomy"
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.json")
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config_file(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_run_ledger(tmp_path):
    db = DatabaseManager(f"sqlite:///{tmp_path / 'runs.db'}")
    db.record_run("shadow", "abc", 1, verdict="shadowed", report_path="r.json", summary={"passed": True})
    db.record_run("shadow", "def", 2, exit_status=3)
    db.record_run("dichotomy", "abc", 1)
    assert [r.config_hash for r in db.runs("shadow")] == ["abc", "def"]
    assert len(db.runs(config_hash="abc")) == 2
    first = db.runs("shadow")[0].to_dict()
    assert first["summary"] == {"passed": True}
    assert first["verdict"] == "shadowed"
    db.close()


@pytest.mark.filterwarnings("error:.*utcnow:DeprecationWarning")
def test_run_ledger_timestamps_are_utc(tmp_path):
    db = DatabaseManager(f"sqlite:///{tmp_path / 'runs.db'}")
    db.record_run("shadow", "abc", 1)
    created = db.runs()[0].created_at
    # SQLite drops the offset on the way back
    if created.tzinfo is None:
        created = created.replace(tzinfo=timezone.utc)
    assert abs(datetime.now(timezone.utc) - created) < timedelta(minutes=5)
    db.close()

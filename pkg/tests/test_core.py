import json
import logging
from fractions import Fraction

import numpy as np

from shadowlab.core.errors import ConfigError, ContractError, DomainError, InvariantViolation, ShadowLabError
from shadowlab.core.logging_config import JsonFormatter, log_summary
from shadowlab.core.metrics import MetricsManager
from shadowlab.core.structs import Verdict, jsonable
from shadowlab.runner import exit_status_for


def test_errors_keep_their_builtin_bases():
    assert isinstance(DomainError("x"), ValueError)
    assert isinstance(ContractError("x"), RuntimeError)
    assert isinstance(InvariantViolation("x"), AssertionError)
    err = ConfigError("bad field", {"field": "epsilon"})
    assert isinstance(err, ShadowLabError)
    assert err.to_dict() == {"error": "ConfigError", "message": "bad field", "context": {"field": "epsilon"}}


def test_exit_status_mapping():
    assert exit_status_for(ConfigError("x")) == 2
    assert exit_status_for(DomainError("x")) == 1
    assert exit_status_for(ContractError("x")) == 1
    assert exit_status_for(InvariantViolation("x")) == 3


def test_summary_fields_reach_the_json_formatter(caplog):
    caplog.set_level(logging.INFO, logger="shadowlab.test")
    log_summary(logging.getLogger("shadowlab.test"), "shadow finished", kind="shadow", seed=42)
    (record,) = caplog.records
    assert record.extra_fields == {"kind": "shadow", "seed": 42}
    assert record.funcName == "test_summary_fields_reach_the_json_formatter"

    line = json.loads(JsonFormatter().format(record))
    assert line["message"] == "shadow finished"
    assert line["kind"] == "shadow"
    assert line["seed"] == 42
    assert line["level"] == "INFO"


def test_metrics_are_inert_without_prometheus(monkeypatch):
    monkeypatch.setattr("shadowlab.core.metrics.HAS_PROMETHEUS", False)
    manager = MetricsManager()
    manager.record_shadow_check("verify", "shadowed")
    manager.record_candidates(["fails", "fails", "undecided"])
    manager.record_experiment_latency("shadow", 0.1)
    assert manager._initialized
    assert not manager._enabled


def test_jsonable_normalizes_values():
    doc = jsonable({"v": Verdict.REFUTED, "x": Fraction(1, 4), "a": np.array([1.5, 2.0]), 3: (np.int64(7), None)})
    assert doc == {"v": "refuted", "x": 0.25, "a": [1.5, 2.0], "3": [7, None]}
    assert json.loads(json.dumps(doc)) == doc

"""
SHADOWLAB Errors
Exception hierarchy shared by every module.

Each error carries an optional ``context`` mapping that the CLI prints and
the JSON log formatter emits alongside the message.
"""

from typing import Any, Dict, Optional


class ShadowLabError(Exception):
    """Base class for all SHADOWLAB failures."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": self.context,
        }


class DomainError(ShadowLabError, ValueError):
    """Input outside the domain of an operation (bad point, empty set, ε ≤ 0)."""


class ContractError(ShadowLabError, RuntimeError):
    """An operation precondition does not hold, so its guarantee does not apply."""


class InvariantViolation(ShadowLabError, AssertionError):
    """A property that holds by construction was observed to fail."""


class ConfigError(ShadowLabError):
    """Experiment configuration is malformed or inconsistent."""

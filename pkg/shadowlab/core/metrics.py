import collections
import logging
from typing import Any, Dict, Iterable

# Optional dependency: counters are no-ops without prometheus_client
HAS_PROMETHEUS = False
try:
    import prometheus_client  # noqa: F401
    HAS_PROMETHEUS = True
except ImportError:
    pass

logger = logging.getLogger("shadowlab.core.metrics")


class MetricsManager:
    """
    Process-wide counters for shadowing checks and experiment runs.
    """
    def __init__(self):
        self._enabled = False
        self._initialized = False
        self._counters: Dict[str, Any] = {}
        self._histograms: Dict[str, Any] = {}

    def _ensure_initialized(self):
        if self._initialized:
            return

        self._enabled = HAS_PROMETHEUS
        if HAS_PROMETHEUS:
            try:
                self._init_prometheus_metrics()
            except Exception as e:
                logger.warning(f"Failed to init Prometheus metrics: {e}")
                self._enabled = False

        self._initialized = True

    def _init_prometheus_metrics(self):
        from prometheus_client import Counter, Histogram
        self._counters["shadow_checks"] = Counter(
            "shadowlab_shadow_checks_total", "Shadowing verifications", ["method", "verdict"])
        self._counters["pseudo_orbits"] = Counter(
            "shadowlab_pseudo_orbits_total", "Pseudo-orbits generated", ["kind"])
        self._histograms["experiment_latency"] = Histogram(
            "shadowlab_experiment_latency_seconds", "Experiment wall time", ["kind"])
        self._counters["candidates"] = Counter(
            "shadowlab_refutation_candidates_total", "Refutation candidates by outcome", ["outcome"])

    def record_shadow_check(self, method: str, verdict: str):
        self._ensure_initialized()
        if self._enabled:
            self._counters["shadow_checks"].labels(method=method, verdict=verdict).inc()

    def record_pseudo_orbit(self, kind: str):
        self._ensure_initialized()
        if self._enabled:
            self._counters["pseudo_orbits"].labels(kind=kind).inc()

    def record_experiment_latency(self, kind: str, duration: float):
        self._ensure_initialized()
        if self._enabled:
            self._histograms["experiment_latency"].labels(kind=kind).observe(duration)

    def record_candidates(self, outcomes: Iterable[str]):
        """One count per candidate outcome (fails, shadows, undecided)."""
        self._ensure_initialized()
        if self._enabled:
            for outcome, count in collections.Counter(outcomes).items():
                self._counters["candidates"].labels(outcome=outcome).inc(count)


# Global Instance
metrics_manager = MetricsManager()

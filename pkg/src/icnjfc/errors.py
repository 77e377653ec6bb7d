"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid topology, instance, scenario or plan configuration."""


class AnomalyError(RuntimeError):
    """A simulation finished with nonzero anomaly counters."""

    def __init__(self, message, counters=None):
        super().__init__(message)
        self.counters = dict(counters or {})


class LivelockError(RuntimeError):
    """Simulation stopped making progress while requests were outstanding."""

"""Exception types shared across the toolkit."""


class ZonecastError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ZonecastError, ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GridError(ZonecastError, ValueError):
    """Timestamps cannot be placed on the uniform sampling grid."""


class ConfigError(ZonecastError, ValueError):
    """Invalid configuration value or combination."""


class ShapeError(ZonecastError, ValueError):
    """Inconsistent array dimensions (includes too-short sequences)."""


class SelectionError(ZonecastError, ValueError):
    """Trajectory selection cannot proceed (e.g. empty candidate pool)."""


class IdentifiabilityError(ZonecastError, ValueError):
    """Regression problem is rank deficient; names the deficient directions."""


class MetricError(ZonecastError, ValueError):
    """Metric undefined for the given input (empty, too few points, ...)."""


class NotApplicableError(ZonecastError, ValueError):
    """Requested diagnostic does not apply to this report type."""

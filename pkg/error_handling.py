"""
error_handling.py
-----------------

Centralized error handling, validation, and logging utilities for the
biorhythm event-metrics toolkit.

Features:
- Metric defaults and physiological bounds
- Custom exception classes (mapped to CLI exit codes)
- Logging configuration
- Per-metric error recovery for report bundles
- Row-level validators for ingestion
"""

import logging
from typing import Optional, Any, Tuple, List
from dataclasses import dataclass


# ====================
# CONFIGURATION
# ====================

class MetricConfig:
    """Configuration constants shared by the metric modules."""

    # Physiological bounds (ingestion validation)
    MIN_HEART_RATE = 20.0     # exclusive
    MAX_HEART_RATE = 250.0    # exclusive
    MIN_SLEEP_MINUTES = 0.0
    MAX_SLEEP_MINUTES = 1440.0
    MIN_STEPS = 0
    MINUTES_PER_DAY = 1440.0

    # Event windows (days)
    DEFAULT_ALPHA_DAYS = 7
    DEFAULT_RHYTHM_WINDOW_DAYS = 28

    # SPIKE-distance
    DEFAULT_GRID_POINTS_PER_MEAN_ISI = 200
    MIN_GRID_POINTS_PER_MEAN_ISI = 10

    # Welch PSD
    DEFAULT_SEGMENT_DAYS = 14
    MIN_SEGMENT_DAYS = 4
    DEFAULT_OVERLAP_FRACTION = 0.5
    MAX_GAP_DAYS = 2

    # Shift distributions / KL
    DEFAULT_SMOOTHING_MASS = 1e-9

    # Null model
    DEFAULT_NULL_DAYS = 100

    # Clustering
    DEFAULT_DBSCAN_EPS = 0.5
    DEFAULT_DBSCAN_MIN_PTS = 5

    # Coverage filter
    DEFAULT_COVERAGE_FRACTION = 0.9

    # Confidence intervals
    Z_95 = 1.96

    # Logging
    LOG_LEVEL = logging.WARNING  # Change to DEBUG for verbose output
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_METRIC_FAILURE = 4


# ====================
# CUSTOM EXCEPTIONS
# ====================

class BiorhythmError(Exception):
    """Base exception for biorhythm metric errors."""
    pass


class ConfigError(BiorhythmError):
    """Raised when a parameter, spec file or config key is invalid."""
    pass


class IngestionError(BiorhythmError):
    """Raised when an activity CSV cannot be ingested."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateRecordError(IngestionError):
    """Raised when the same (user, date) appears more than once."""

    def __init__(self, offenders: List[Tuple[str, str]]):
        self.offenders = list(offenders)
        listed = ", ".join(f"{u}/{d}" for u, d in self.offenders[:20])
        more = f" (+{len(self.offenders) - 20} more)" if len(self.offenders) > 20 else ""
        super().__init__(f"duplicate (user, date) records: {listed}{more}")


class UnknownUserError(BiorhythmError, LookupError):
    """Raised when a user id is not part of the cohort."""
    pass


class DomainError(BiorhythmError, ValueError):
    """Raised when an input lies outside an operation's domain."""
    pass


class InsufficientDataError(BiorhythmError):
    """Raised when there are too few spikes, users or samples."""

    def __init__(self, message: str, user_id: Optional[str] = None):
        if user_id is not None:
            message = f"user {user_id}: {message}"
        super().__init__(message)
        self.user_id = user_id


class UndefinedGrowthError(DomainError):
    """Raised when OOS growth is requested with no before-window outliers."""
    pass


class UndefinedSilhouetteError(DomainError):
    """Raised when silhouette is requested for fewer than two clusters."""
    pass


# ====================
# LOGGING SETUP
# ====================

def setup_logging(name: str = "biorhythm", level: int = None) -> logging.Logger:
    """
    Setup logging for metric modules.

    Args:
        name: Logger name
        level: Logging level (defaults to MetricConfig.LOG_LEVEL)

    Returns:
        Configured logger
    """
    if level is None:
        level = MetricConfig.LOG_LEVEL

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid duplicate handlers
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setLevel(logging.DEBUG)
        formatter = logging.Formatter(MetricConfig.LOG_FORMAT)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    return logger


LIBRARY_LOGGERS = (
    "cohort_loader", "spike_sync", "rhythm", "volume", "null_model",
    "cohort_simulator", "signatures", "analysis_builder",
)


def set_library_log_level(level: int) -> None:
    """Apply one level to every library logger (used by the CLI --verbose flag)."""
    for name in LIBRARY_LOGGERS:
        setup_logging(name).setLevel(level)


# ====================
# VALIDATION FUNCTIONS
# ====================

def validate_steps(steps: Any) -> Tuple[bool, Optional[str]]:
    """
    Validate a daily step count.

    Returns:
        (is_valid, error_message)
    """
    try:
        value = float(steps)
    except (TypeError, ValueError) as e:
        return False, f"steps must be numeric: {e}"

    if value != int(value):
        return False, f"steps must be an integer count, got {steps}"

    if value < MetricConfig.MIN_STEPS:
        return False, f"steps must be >= {MetricConfig.MIN_STEPS}, got {steps}"

    return True, None


def validate_sleep_minutes(minutes: Any) -> Tuple[bool, Optional[str]]:
    """
    Validate nightly sleep duration in minutes.

    Returns:
        (is_valid, error_message)
    """
    try:
        value = float(minutes)
    except (TypeError, ValueError) as e:
        return False, f"sleep_minutes must be numeric: {e}"

    if not (MetricConfig.MIN_SLEEP_MINUTES <= value <= MetricConfig.MAX_SLEEP_MINUTES):
        return False, (f"sleep_minutes must be between {MetricConfig.MIN_SLEEP_MINUTES:g} "
                       f"and {MetricConfig.MAX_SLEEP_MINUTES:g}, got {minutes}")

    return True, None


def validate_heart_rate(bpm: Any) -> Tuple[bool, Optional[str]]:
    """
    Validate a daily-average heart rate.

    Returns:
        (is_valid, error_message)
    """
    try:
        value = float(bpm)
    except (TypeError, ValueError) as e:
        return False, f"heart_rate_bpm must be numeric: {e}"

    if not (MetricConfig.MIN_HEART_RATE < value < MetricConfig.MAX_HEART_RATE):
        return False, (f"heart_rate_bpm must be within ({MetricConfig.MIN_HEART_RATE:g}, "
                       f"{MetricConfig.MAX_HEART_RATE:g}), got {bpm}")

    return True, None


def validate_sleep_onset(minutes: Any, next_day: Any) -> Tuple[bool, Optional[str]]:
    """
    Validate a sleep-onset time and its next-day flag.

    Returns:
        (is_valid, error_message)
    """
    try:
        value = float(minutes)
    except (TypeError, ValueError) as e:
        return False, f"sleep_onset_min must be numeric: {e}"

    if not (0.0 <= value < MetricConfig.MINUTES_PER_DAY):
        return False, f"sleep_onset_min must be within [0, 1440), got {minutes}"

    if next_day not in (0, 1):
        return False, f"onset_next_day must be 0 or 1 when an onset is present, got {next_day}"

    return True, None


def validate_fraction(value: Any, name: str = "fraction") -> Tuple[bool, Optional[str]]:
    """
    Validate a value in [0, 1].

    Returns:
        (is_valid, error_message)
    """
    try:
        value = float(value)
    except (TypeError, ValueError) as e:
        return False, f"{name} must be numeric: {e}"

    if not (0.0 <= value <= 1.0):
        return False, f"{name} must be between 0 and 1, got {value}"

    return True, None


def validate_positive_int(value: Any, name: str = "value", minimum: int = 1) -> Tuple[bool, Optional[str]]:
    """
    Validate an integer >= minimum.

    Returns:
        (is_valid, error_message)
    """
    if isinstance(value, bool):
        return False, f"{name} must be an integer, got {value}"
    try:
        ivalue = int(value)
    except (TypeError, ValueError) as e:
        return False, f"{name} must be an integer: {e}"

    if ivalue != value and not isinstance(value, str):
        return False, f"{name} must be an integer, got {value}"

    if ivalue < minimum:
        return False, f"{name} must be >= {minimum}, got {ivalue}"

    return True, None


def require(check: Tuple[bool, Optional[str]]) -> None:
    """Raise ConfigError when a validator tuple reports failure."""
    ok, message = check
    if not ok:
        raise ConfigError(message)


# ====================
# ERROR RECOVERY
# ====================

@dataclass
class ErrorContext:
    """Context information for error handling."""
    operation: str
    event: Optional[str] = None
    activity: Optional[str] = None
    user_id: Optional[str] = None
    details: Optional[str] = None


def handle_metric_error(context: ErrorContext, error: Exception, logger: logging.Logger) -> str:
    """
    Log a metric failure and return the message recorded in reports.

    Args:
        context: Error context information
        error: The exception raised by the metric
        logger: Logger instance

    Returns:
        Message suitable for a manifest error entry or a missing-cell note
    """
    msg = f"{context.operation} failed"
    if context.event:
        msg += f" for event {context.event}"
    if context.activity:
        msg += f" ({context.activity})"
    if context.user_id:
        msg += f" for user {context.user_id}"
    msg += f": {type(error).__name__}: {error}"
    if context.details:
        msg += f" [{context.details}]"

    logger.warning(msg)
    return msg

"""
rhythm.py
---------

Characteristic rhythms of daily activity and their disruption around events.

A user's rhythm over a window is the period (in days) with the most power in
the Welch power spectral density of their daily series. The rhythm shift is
the after-window rhythm minus the before-window rhythm; shifts pooled over
users form a frequency distribution, and the rhythm disruption of an event is
the KL divergence between its shift distribution and a random-day one.

Classes:
- RhythmConfig: Window, Welch and binning parameters
- PsdEstimate: Periods (descending) with their spectral power
- RhythmTable: Per-user rhythm for every window start of a cohort activity
- ShiftDistribution: Smoothed histogram of rhythm shifts on shared edges
- DisruptionResult: KL disruption of one event for one activity

Functions:
- fill_gaps, welch_psd, characteristic_rhythm
- rhythm_shift_between, rhythm_shift_user
- rhythm_table, event_shifts
- shift_bin_edges, shift_distribution, rhythm_disruption, event_rhythm_disruption
- population_psd, write_psd_csv, write_shift_csv
"""

from __future__ import annotations
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import welch
from scipy.stats import entropy

from activity_types import Activity, Cohort, DailySeries, EventSpec
from error_handling import (
    setup_logging, MetricConfig, ConfigError, DomainError, InsufficientDataError,
)
from volume import population_volume

logger = setup_logging("rhythm")

Window = Tuple[int, int]

# Users per batched Welch call
_USER_CHUNK = 128


@dataclass(frozen=True)
class RhythmConfig:
    """
    Parameters of the rhythm metrics.

    window_days is the length of each before/after window; segment_days and
    overlap_fraction configure Welch (Hann window, linear detrend per segment).
    bin_width_days defaults to the finest spacing between representable periods.
    """
    window_days: int = MetricConfig.DEFAULT_RHYTHM_WINDOW_DAYS
    segment_days: int = MetricConfig.DEFAULT_SEGMENT_DAYS
    overlap_fraction: float = MetricConfig.DEFAULT_OVERLAP_FRACTION
    max_gap_days: int = MetricConfig.MAX_GAP_DAYS
    bin_width_days: Optional[float] = None
    smoothing_mass: float = MetricConfig.DEFAULT_SMOOTHING_MASS

    def __post_init__(self):
        if isinstance(self.segment_days, bool) or int(self.segment_days) != self.segment_days \
                or self.segment_days < MetricConfig.MIN_SEGMENT_DAYS:
            raise ConfigError(f"segment_days must be an integer >= {MetricConfig.MIN_SEGMENT_DAYS}, "
                              f"got {self.segment_days}")
        if isinstance(self.window_days, bool) or int(self.window_days) != self.window_days \
                or self.window_days < self.segment_days:
            raise ConfigError(f"window_days must be an integer >= segment_days ({self.segment_days}), "
                              f"got {self.window_days}")
        if not (0.0 <= self.overlap_fraction < 1.0):
            raise ConfigError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        if int(self.max_gap_days) != self.max_gap_days or self.max_gap_days < 0:
            raise ConfigError(f"max_gap_days must be a nonnegative integer, got {self.max_gap_days}")
        if self.bin_width_days is not None and not self.bin_width_days > 0:
            raise ConfigError(f"bin_width_days must be > 0, got {self.bin_width_days}")
        if not (self.smoothing_mass >= 0):
            raise ConfigError(f"smoothing_mass must be >= 0, got {self.smoothing_mass}")
        object.__setattr__(self, "window_days", int(self.window_days))
        object.__setattr__(self, "segment_days", int(self.segment_days))
        object.__setattr__(self, "max_gap_days", int(self.max_gap_days))

    @property
    def noverlap(self) -> int:
        return min(int(round(self.segment_days * self.overlap_fraction)), self.segment_days - 1)

    @property
    def periods(self) -> np.ndarray:
        """Representable periods, descending (zero frequency excluded)."""
        k = np.arange(1, self.segment_days // 2 + 1)
        return self.segment_days / k

    @property
    def bin_width(self) -> float:
        if self.bin_width_days is not None:
            return float(self.bin_width_days)
        periods = self.periods
        if periods.size < 2:
            return float(periods[0])
        return float(np.min(-np.diff(periods)))

    @property
    def max_shift_days(self) -> float:
        """Largest representable rhythm shift (longest minus shortest period)."""
        periods = self.periods
        return float(periods[0] - periods[-1])


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """Spectral power per period (days), periods strictly decreasing."""
    periods: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        periods = np.asarray(self.periods, dtype=float)
        power = np.asarray(self.power, dtype=float)
        if periods.shape != power.shape:
            raise DomainError("periods and power must have the same length")
        if np.any(np.diff(periods) >= 0):
            raise DomainError("periods must be strictly decreasing")
        if np.any(power < 0):
            raise DomainError("power must be nonnegative")
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "power", power)

    def peak_period(self) -> float:
        """Period of maximum power; ties go to the smaller period."""
        return float(self.periods[_last_argmax(self.power[None, :])[0]])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"period_days": self.periods, "power": self.power})


# -------------------------
# Gap filling and spectra
# -------------------------
def fill_gaps(values, max_gap_days: int = MetricConfig.MAX_GAP_DAYS) -> np.ndarray:
    """
    Linearly interpolate missing runs of at most max_gap_days.

    Runs touching either end take the nearest observed value; longer runs
    stay NaN. Works on 1-D series or row-wise on 2-D arrays.
    """
    arr = np.array(values, dtype=float)
    if arr.ndim == 2:
        return np.vstack([fill_gaps(row, max_gap_days) for row in arr]) if arr.size else arr
    missing = np.isnan(arr)
    if not missing.any() or missing.all():
        return arr
    idx = np.arange(arr.size)
    filled = np.interp(idx, idx[~missing], arr[~missing])
    # Label each missing run and measure it
    starts = missing & ~np.concatenate(([False], missing[:-1]))
    run_id = np.cumsum(starts)
    lengths = np.bincount(run_id[missing], minlength=run_id.max() + 1)
    short = np.zeros_like(missing)
    short[missing] = lengths[run_id[missing]] <= max_gap_days
    return np.where(short, filled, arr)


def _last_argmax(power: np.ndarray) -> np.ndarray:
    # Periods are descending, so the last maximum is the smallest period
    n = power.shape[-1]
    return n - 1 - np.argmax(power[..., ::-1], axis=-1)


def _window_power(windows: np.ndarray, cfg: RhythmConfig) -> np.ndarray:
    """Welch power (zero frequency dropped) along the last axis."""
    centred = windows - windows.mean(axis=-1, keepdims=True)
    _, power = welch(centred, fs=1.0, window="hann", nperseg=cfg.segment_days,
                     noverlap=cfg.noverlap, detrend="linear", scaling="density", axis=-1)
    return np.maximum(power[..., 1:], 0.0)


def _check_window(values: np.ndarray, window: Window, cfg: RhythmConfig) -> np.ndarray:
    t1, t2 = int(window[0]), int(window[1])
    if t1 < 0 or t2 > values.size or t2 <= t1:
        raise DomainError(f"window [{t1}, {t2}) is outside the series (length {values.size})")
    chunk = values[t1:t2]
    if np.all(np.isnan(chunk)):
        raise DomainError(f"window [{t1}, {t2}) has no measurements")
    if chunk.size < cfg.segment_days:
        raise InsufficientDataError(f"window [{t1}, {t2}) has {chunk.size} days, "
                                    f"need at least {cfg.segment_days}")
    if np.any(np.isnan(chunk)):
        raise InsufficientDataError(f"window [{t1}, {t2}) has a gap longer than {cfg.max_gap_days} days")
    return chunk


def _series_values(series, cfg: RhythmConfig) -> np.ndarray:
    values = series.values if isinstance(series, DailySeries) else np.asarray(series, dtype=float)
    return fill_gaps(values, cfg.max_gap_days)


def welch_psd(series, window: Window, segment_days: int = MetricConfig.DEFAULT_SEGMENT_DAYS,
              overlap_fraction: float = MetricConfig.DEFAULT_OVERLAP_FRACTION,
              max_gap_days: int = MetricConfig.MAX_GAP_DAYS) -> PsdEstimate:
    """
    Welch PSD of a daily series over the day window [t1, t2).

    The series is gap-filled, the window mean removed, and Hann-windowed
    segments (linear detrend) averaged. Frequencies become periods in days.

    Raises:
        DomainError: window outside the series or without any measurement
        InsufficientDataError: fewer than segment_days samples, or a long gap
    """
    cfg = RhythmConfig(window_days=max(segment_days, int(window[1]) - int(window[0])),
                       segment_days=segment_days, overlap_fraction=overlap_fraction,
                       max_gap_days=max_gap_days)
    return _psd(series, window, cfg)


def _psd(series, window: Window, cfg: RhythmConfig) -> PsdEstimate:
    chunk = _check_window(_series_values(series, cfg), window, cfg)
    power = _window_power(chunk[None, :], cfg)[0]
    return PsdEstimate(periods=cfg.periods, power=power)


def characteristic_rhythm(series, window: Window, cfg: Optional[RhythmConfig] = None) -> float:
    """Period (days) of maximum Welch power over [t1, t2); ties go to the smaller period."""
    cfg = cfg or RhythmConfig()
    return _psd(series, window, cfg).peak_period()


def rhythm_shift_between(series, before: Window, after: Window, cfg: Optional[RhythmConfig] = None) -> float:
    """rhythm(after) - rhythm(before), in days."""
    cfg = cfg or RhythmConfig()
    values = _series_values(series, cfg)
    return characteristic_rhythm(values, after, cfg) - characteristic_rhythm(values, before, cfg)


def rhythm_shift_user(series: DailySeries, event: EventSpec, cfg: Optional[RhythmConfig] = None) -> float:
    """
    Rhythm over [t, t + W) minus rhythm over [t - W, t), W = cfg.window_days.

    Raises:
        InsufficientDataError: either window lacks data
    """
    cfg = cfg or RhythmConfig()
    t = (event.event_date - series.start_date).days
    w = cfg.window_days
    return rhythm_shift_between(series, (t - w, t), (t, t + w), cfg)


# -------------------------
# Cohort-wide rhythms
# -------------------------
@dataclass(frozen=True, eq=False)
class RhythmTable:
    """
    Rhythm of every user for every window start s, over days [s, s + W).

    values[u, s] is NaN where the window still has missing days after gap filling.
    """
    users: Tuple[str, ...]
    window_days: int
    values: np.ndarray

    def shifts_at(self, day: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Shifts rhythm[day] - rhythm[day - W] for users with both windows valid.

        Returns:
            (shifts, user mask)
        """
        w = self.window_days
        if day - w < 0 or day >= self.values.shape[1]:
            raise DomainError(f"day {day} has no complete rhythm windows on both sides (W={w})")
        diff = self.values[:, day] - self.values[:, day - w]
        valid = ~np.isnan(diff)
        return diff[valid], valid

    def valid_days(self) -> np.ndarray:
        """Days with both rhythm windows inside the interval."""
        return np.arange(self.window_days, self.values.shape[1])


def rhythm_table(cohort: Cohort, activity, cfg: Optional[RhythmConfig] = None) -> RhythmTable:
    """Rhythm for each user and window start (batched Welch over sliding windows)."""
    cfg = cfg or RhythmConfig()
    w = cfg.window_days
    mat = cohort.matrix(activity)
    n_starts = cohort.n_days - w + 1
    if n_starts < 1:
        raise DomainError(f"cohort interval ({cohort.n_days} days) is shorter than the rhythm window ({w})")
    periods = cfg.periods
    out = np.full((cohort.n_users, n_starts), np.nan)
    for lo in range(0, cohort.n_users, _USER_CHUNK):
        filled = fill_gaps(mat[lo:lo + _USER_CHUNK], cfg.max_gap_days)
        windows = sliding_window_view(filled, w, axis=1)
        bad = np.any(np.isnan(windows), axis=-1)
        power = _window_power(np.where(np.isnan(windows), 0.0, windows), cfg)
        rhythm = periods[_last_argmax(power)]
        out[lo:lo + _USER_CHUNK] = np.where(bad, np.nan, rhythm)
    return RhythmTable(users=cohort.users, window_days=w, values=out)


def event_shifts(cohort: Cohort, activity, event: EventSpec, cfg: Optional[RhythmConfig] = None,
                 table: Optional[RhythmTable] = None) -> Tuple[Dict[str, float], Dict[str, str]]:
    """
    Per-user rhythm shifts around an event.

    Returns:
        (shifts by user, skip reasons by user)
    """
    cfg = cfg or RhythmConfig()
    t = event.require_window(cohort, cfg.window_days, cfg.window_days)
    table = table or rhythm_table(cohort, activity, cfg)
    shifts, valid = table.shifts_at(t)
    users = np.array(table.users, dtype=object)
    kept = dict(zip(users[valid].tolist(), shifts.tolist()))
    skipped = {u: f"rhythm window around {event.event_date} has a gap longer than "
                  f"{cfg.max_gap_days} days" for u in users[~valid].tolist()}
    if skipped:
        logger.info(f"{Activity.parse(activity).value}: skipped {len(skipped)} user(s) without "
                    f"complete rhythm windows around '{event.name}'")
    return kept, skipped


# -------------------------
# Shift distributions
# -------------------------
@dataclass(frozen=True, eq=False)
class ShiftDistribution:
    """Normalized masses of rhythm shifts over shared, ascending bin edges."""
    bin_edges: np.ndarray
    probabilities: np.ndarray
    n_samples: int = 0

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        probs = np.asarray(self.probabilities, dtype=float)
        if edges.ndim != 1 or probs.size != edges.size - 1:
            raise DomainError("need one probability per bin")
        if np.any(np.diff(edges) <= 0):
            raise DomainError("bin edges must be ascending")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise DomainError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "probabilities", probs)

    @property
    def centres(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def mean(self) -> float:
        return float(np.dot(self.centres, self.probabilities))

    def mass_at(self, value: float) -> float:
        """Probability of the bin containing value."""
        i = int(np.clip(np.searchsorted(self.bin_edges, value, side="right") - 1, 0, self.probabilities.size - 1))
        return float(self.probabilities[i])


def shift_bin_edges(bin_width_days: float, max_shift_days: float) -> np.ndarray:
    """Symmetric edges with zero at a bin centre, covering [-max_shift, max_shift]."""
    if not bin_width_days > 0:
        raise DomainError(f"bin width must be > 0, got {bin_width_days}")
    half = int(math.ceil(max_shift_days / bin_width_days - 0.5 - 1e-9))
    half = max(half, 0)
    return (np.arange(-half, half + 2) - 0.5) * bin_width_days


def shift_distribution(shifts: Sequence[float], bin_width_days: Optional[float] = None,
                       smoothing_mass: float = MetricConfig.DEFAULT_SMOOTHING_MASS,
                       max_shift_days: Optional[float] = None) -> ShiftDistribution:
    """
    Histogram of shifts plus smoothing_mass per bin, renormalized.

    Shifts beyond the edges fall into the outermost bins. A smoothing mass of 0
    is accepted only when every bin is nonempty.

    Raises:
        DomainError: no shifts, bad width, or zero smoothing with an empty bin
    """
    defaults = RhythmConfig()
    bin_width_days = defaults.bin_width if bin_width_days is None else bin_width_days
    max_shift_days = defaults.max_shift_days if max_shift_days is None else max_shift_days
    values = np.asarray(list(shifts), dtype=float)
    if values.size == 0:
        raise DomainError("no rhythm shifts to aggregate")
    if smoothing_mass < 0:
        raise DomainError(f"smoothing mass must be >= 0, got {smoothing_mass}")
    edges = shift_bin_edges(bin_width_days, max_shift_days)
    clipped = np.clip(values, edges[0], np.nextafter(edges[-1], -np.inf))
    counts, _ = np.histogram(clipped, bins=edges)
    if smoothing_mass == 0 and np.any(counts == 0):
        raise DomainError("smoothing mass 0 needs every bin nonempty (KL would be infinite)")
    masses = counts / counts.sum() + smoothing_mass
    return ShiftDistribution(bin_edges=edges, probabilities=masses / masses.sum(), n_samples=int(values.size))


def distribution_for(shifts: Sequence[float], cfg: RhythmConfig) -> ShiftDistribution:
    return shift_distribution(shifts, cfg.bin_width, cfg.smoothing_mass, cfg.max_shift_days)


def rhythm_disruption(event_dist: ShiftDistribution, null_dist: ShiftDistribution) -> float:
    """
    KL divergence D(event || null) in nats.

    Raises:
        DomainError: the distributions use different bin edges
    """
    if event_dist.bin_edges.shape != null_dist.bin_edges.shape \
            or not np.array_equal(event_dist.bin_edges, null_dist.bin_edges):
        raise DomainError("shift distributions have different bin edges")
    return max(float(entropy(event_dist.probabilities, null_dist.probabilities)), 0.0)


@dataclass
class DisruptionResult:
    """Rhythm disruption of one event for one activity."""
    event: EventSpec
    activity: Activity
    kl: float
    n_users: int
    window_days: int
    event_dist: ShiftDistribution
    null_dist: ShiftDistribution
    skipped: Dict[str, str] = field(default_factory=dict)

    def report(self) -> Dict:
        return {
            "event": self.event.name,
            "activity": self.activity.value,
            "kl": self.kl,
            "n_users": self.n_users,
            "window_days": self.window_days,
        }


def event_rhythm_disruption(cohort: Cohort, activity, event: EventSpec, null_dist: ShiftDistribution,
                            cfg: Optional[RhythmConfig] = None,
                            table: Optional[RhythmTable] = None) -> DisruptionResult:
    """Shift distribution of an event scored against a null distribution."""
    cfg = cfg or RhythmConfig()
    activity = Activity.parse(activity)
    shifts, skipped = event_shifts(cohort, activity, event, cfg, table)
    if not shifts:
        raise InsufficientDataError(f"no user has complete rhythm windows around '{event.name}'")
    event_dist = distribution_for([shifts[u] for u in sorted(shifts)], cfg)
    return DisruptionResult(event=event, activity=activity, kl=rhythm_disruption(event_dist, null_dist),
                            n_users=len(shifts), window_days=cfg.window_days, event_dist=event_dist,
                            null_dist=null_dist, skipped=skipped)


# -------------------------
# Population spectra and exports
# -------------------------
def population_psd(cohort: Cohort, activity, cfg: Optional[RhythmConfig] = None) -> PsdEstimate:
    """Welch PSD of the population-average series over the whole interval."""
    cfg = cfg or RhythmConfig()
    series = population_volume(cohort, activity)
    full = replace(cfg, window_days=max(cfg.segment_days, cohort.n_days))
    return _psd(series.mean, (0, cohort.n_days), full)


def write_psd_csv(psd: PsdEstimate, path) -> Path:
    path = Path(path)
    psd.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def write_shift_csv(event_dist: ShiftDistribution, null_dist: ShiftDistribution, path) -> Path:
    """CSV bin_left,bin_right,event_mass,null_mass."""
    if not np.array_equal(event_dist.bin_edges, null_dist.bin_edges):
        raise DomainError("shift distributions have different bin edges")
    path = Path(path)
    pd.DataFrame({
        "bin_left": event_dist.bin_edges[:-1],
        "bin_right": event_dist.bin_edges[1:],
        "event_mass": event_dist.probabilities,
        "null_mass": null_dist.probabilities,
    }).to_csv(path, index=False, lineterminator="\n")
    return path

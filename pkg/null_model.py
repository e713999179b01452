"""
null_model.py
-------------

Random-day baselines for the event metrics.

Each metric is evaluated at uniformly sampled days (with replacement) whose
neighbourhood fits in the cohort interval and avoids excluded dates. The mean
over those days, with a 95% confidence interval, is what an event is compared
against; the pooled random-day rhythm shifts form the null shift distribution.

Classes:
- NullSummary: Per-day samples with mean and 95% CI

Functions:
- sample_random_days: seeded uniform draw of admissible days
- null_oos, null_sync: OOS (and OOS growth) at random days
- null_volume: event-window volume at random days
- null_shift_distribution: pooled rhythm shifts at random days
- null_rhythm_disruption: KL of single random days against the null
- event_window_dates: dates covered by event neighbourhoods (for exclusions)
"""

from __future__ import annotations
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from activity_types import Activity, Cohort, EventSpec
from error_handling import (
    setup_logging, MetricConfig, ConfigError, DomainError, InsufficientDataError,
    validate_positive_int,
)
from rhythm import RhythmConfig, RhythmTable, ShiftDistribution, distribution_for, rhythm_disruption, rhythm_table
from spike_sync import (
    PairDistanceMatrix, SpikeDistanceConfig, evaluate_event_sync, full_year_pair_distances,
)
from volume import PopulationSeries, event_volume_summary, population_volume

logger = setup_logging("null_model")


@dataclass(frozen=True)
class NullSummary:
    """
    Metric values at random days. n_days counts the scored days; days whose
    metric failed are counted in skipped_days.
    """
    metric: str
    samples: Tuple[float, ...]
    seed: int
    days: Tuple[date, ...] = ()
    skipped_days: int = 0

    def __post_init__(self):
        if not self.samples:
            raise InsufficientDataError(f"no random day could be scored for {self.metric}")
        object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))

    @property
    def n_days(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def ci_defined(self) -> bool:
        return self.n_days >= 2

    @property
    def ci_halfwidth(self) -> float:
        if not self.ci_defined:
            return math.inf
        return float(MetricConfig.Z_95 * np.std(self.samples, ddof=1) / math.sqrt(self.n_days))

    @property
    def standard_error(self) -> float:
        return self.ci_halfwidth / MetricConfig.Z_95

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.samples, q))

    def report(self) -> Dict:
        return {
            "metric": self.metric,
            "n_days": self.n_days,
            "seed": self.seed,
            "mean": self.mean,
            "ci_halfwidth": self.ci_halfwidth if self.ci_defined else None,
            "skipped_days": self.skipped_days,
        }


def _require_n(n: int) -> int:
    ok, message = validate_positive_int(n, "n")
    if not ok:
        raise ConfigError(message)
    return int(n)


# -------------------------
# Day sampling
# -------------------------
def sample_random_days(interval: Tuple[date, date], alpha_days: int, n: int, seed: int,
                       exclusions: Iterable[date] = (), after_days: Optional[int] = None) -> List[date]:
    """
    Draw n days uniformly with replacement from admissible days.

    A day t is admissible when [t - alpha_days, t + after_days) fits in the
    interval (after_days defaults to alpha_days) and contains no excluded date.

    Raises:
        ConfigError: n < 1
        DomainError: no admissible day
    """
    n = _require_n(n)
    start, end = interval
    before = int(alpha_days)
    after = before if after_days is None else int(after_days)
    n_days = (end - start).days + 1
    candidates = np.arange(before, n_days - after + 1)
    excluded = np.zeros(n_days + 1, dtype=int)
    for d in exclusions:
        i = (d - start).days
        if 0 <= i < n_days:
            excluded[i + 1] = 1
    if candidates.size:
        # Prefix sums count excluded days inside each neighbourhood
        cum = np.cumsum(excluded)
        hits = cum[np.minimum(candidates + after, n_days)] - cum[candidates - before]
        candidates = candidates[hits == 0]
    if candidates.size == 0:
        raise DomainError(f"no admissible random day in {start}..{end} for a "
                          f"-{before}/+{after} day neighbourhood")
    rng = np.random.default_rng(seed)
    picks = rng.choice(candidates, size=n, replace=True)
    return [start + timedelta(days=int(i)) for i in picks]


def event_window_dates(events: Sequence[EventSpec], before_days: Optional[int] = None,
                       after_days: Optional[int] = None) -> Set[date]:
    """Dates inside [t - before, t + after] of every event."""
    out: Set[date] = set()
    for e in events:
        before = e.alpha_days if before_days is None else before_days
        after = e.alpha_days if after_days is None else after_days
        out.update(e.event_date + timedelta(days=k) for k in range(-before, after + 1))
    return out


# -------------------------
# Synchronicity nulls
# -------------------------
def null_sync(cohort: Cohort, alpha_days: int, n: int, seed: int, cfg: Optional[SpikeDistanceConfig] = None,
              pair_budget: Optional[int] = None, exclusions: Iterable[date] = (),
              threshold_source: Optional[PairDistanceMatrix] = None,
              with_growth: bool = True) -> Tuple[NullSummary, Optional[NullSummary]]:
    """
    OOS and OOS growth at n random days.

    Returns:
        (OOS summary, growth summary). The growth summary is None when
        with_growth is False or growth was undefined at every day.
    """
    cfg = cfg or SpikeDistanceConfig()
    days = sample_random_days((cohort.start_date, cohort.end_date), alpha_days, n, seed, exclusions)
    if with_growth and threshold_source is None:
        threshold_source = full_year_pair_distances(cohort, cfg, pair_budget, seed)
    scored: Dict[date, Tuple[Optional[float], Optional[float]]] = {}
    oos, growth = [], []
    skipped_oos = skipped_growth = 0
    for day in days:
        if day not in scored:
            event = EventSpec(f"random {day.isoformat()}", day, alpha_days)
            try:
                result = evaluate_event_sync(cohort, event, cfg, pair_budget, seed,
                                             threshold_source, with_growth=with_growth)
                scored[day] = (result.oos, result.growth)
            except (InsufficientDataError, DomainError) as e:
                logger.info(f"Null OOS: skipping {day}: {e}")
                scored[day] = (None, None)
        day_oos, day_growth = scored[day]
        if day_oos is None:
            skipped_oos += 1
        else:
            oos.append(day_oos)
        if day_growth is None:
            skipped_growth += 1
        else:
            growth.append(day_growth)
    oos_summary = NullSummary("oos", tuple(oos), seed, tuple(days), skipped_oos)
    growth_summary = None
    if with_growth and growth:
        growth_summary = NullSummary("oos_growth", tuple(growth), seed, tuple(days), skipped_growth)
    elif with_growth:
        logger.warning("Null OOS growth is undefined at every sampled day (no before-window outliers)")
    return oos_summary, growth_summary


def null_oos(cohort: Cohort, alpha_days: int, n: int = MetricConfig.DEFAULT_NULL_DAYS, seed: int = 0,
             cfg: Optional[SpikeDistanceConfig] = None, pair_budget: Optional[int] = None,
             exclusions: Iterable[date] = ()) -> NullSummary:
    """OOS at n random days with its mean and 95% CI; failing days are skipped and counted."""
    summary, _ = null_sync(cohort, alpha_days, n, seed, cfg, pair_budget, exclusions, with_growth=False)
    return summary


# -------------------------
# Volume null
# -------------------------
def null_volume(cohort: Cohort, activity, alpha_days: int, n: int = MetricConfig.DEFAULT_NULL_DAYS,
                seed: int = 0, exclusions: Iterable[date] = (),
                series: Optional[PopulationSeries] = None) -> NullSummary:
    """Event-window volume at n random days."""
    activity = Activity.parse(activity)
    days = sample_random_days((cohort.start_date, cohort.end_date), alpha_days, n, seed, exclusions,
                              after_days=alpha_days + 1)
    series = series or population_volume(cohort, activity)
    values, skipped = [], 0
    for day in days:
        try:
            values.append(event_volume_summary(cohort, activity, EventSpec("random", day, alpha_days), series))
        except (InsufficientDataError, DomainError) as e:
            logger.info(f"Null volume: skipping {day}: {e}")
            skipped += 1
    return NullSummary(f"volume_{activity.value}", tuple(values), seed, tuple(days), skipped)


# -------------------------
# Rhythm nulls
# -------------------------
def _rhythm_days(cohort: Cohort, n: int, seed: int, cfg: RhythmConfig,
                 exclusions: Iterable[date]) -> List[date]:
    w = cfg.window_days
    return sample_random_days((cohort.start_date, cohort.end_date), w, n, seed, exclusions, after_days=w)


def null_shift_distribution(cohort: Cohort, activity, window_days: Optional[int] = None,
                            n: int = MetricConfig.DEFAULT_NULL_DAYS, seed: int = 0,
                            cfg: Optional[RhythmConfig] = None, exclusions: Iterable[date] = (),
                            table: Optional[RhythmTable] = None) -> ShiftDistribution:
    """
    Rhythm shifts of every user at n random days, pooled and binned.

    Raises:
        DomainError: no shift could be computed
    """
    cfg = cfg or RhythmConfig()
    if window_days is not None and window_days != cfg.window_days:
        cfg = replace(cfg, window_days=window_days)
    table = table or rhythm_table(cohort, activity, cfg)
    pooled = []
    for day in _rhythm_days(cohort, n, seed, cfg, exclusions):
        shifts, _ = table.shifts_at(cohort.day_index(day))
        pooled.append(shifts)
    values = np.concatenate(pooled) if pooled else np.array([])
    if values.size == 0:
        raise DomainError("no rhythm shift could be computed at the sampled random days")
    return distribution_for(values, cfg)


def null_rhythm_disruption(cohort: Cohort, activity, null_dist: ShiftDistribution,
                           n: int = MetricConfig.DEFAULT_NULL_DAYS, seed: int = 0,
                           cfg: Optional[RhythmConfig] = None, exclusions: Iterable[date] = (),
                           table: Optional[RhythmTable] = None) -> NullSummary:
    """KL of each random day's shift distribution against null_dist."""
    activity = Activity.parse(activity)
    cfg = cfg or RhythmConfig()
    table = table or rhythm_table(cohort, activity, cfg)
    days = _rhythm_days(cohort, n, seed, cfg, exclusions)
    values, skipped = [], 0
    for day in days:
        shifts, _ = table.shifts_at(cohort.day_index(day))
        if shifts.size == 0:
            skipped += 1
            continue
        values.append(rhythm_disruption(distribution_for(shifts, cfg), null_dist))
    return NullSummary(f"rhythm_disruption_{activity.value}", tuple(values), seed, tuple(days), skipped)

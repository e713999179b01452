"""
signatures.py
-------------

Event signatures and day clustering.

Collects every metric for a list of events into one table (volume per
activity, sleep-onset OOS and OOS growth, rhythm disruption per activity),
adds a Random row from the null models, and places each day in the
"volume x rhythm disruption" plane for DBSCAN clustering.

Classes:
- SignatureConfig: Metric parameters for a signature run
- EventSignature: One row of the signature table
- SignatureAnalysis: Runs all metrics once and keeps the intermediate results
- DayPoint / DayFeatures: Standardized per-day features and their cluster

Functions:
- build_signature_table: events -> rows (Random row last)
- day_feature_points: per-day (volume, disruption) points, z-standardized
- standardize: z-scores with a zero-sd guard
- dbscan: density clustering with canonical labels
- silhouette: mean silhouette over clustered points
- write_signature_csv, write_day_points_csv, cluster_summary
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.cluster import DBSCAN
from sklearn.metrics import silhouette_score

from activity_types import Activity, Cohort, EventSpec
from error_handling import (
    setup_logging, MetricConfig, BiorhythmError, ConfigError, DomainError, UndefinedSilhouetteError,
    ErrorContext, handle_metric_error,
)
from null_model import (
    NullSummary, event_window_dates, null_shift_distribution, null_sync, null_volume,
)
from rhythm import (
    DisruptionResult, RhythmConfig, RhythmTable, ShiftDistribution, distribution_for,
    event_rhythm_disruption, rhythm_disruption, rhythm_table,
)
from spike_sync import (
    EventSyncResult, PairDistanceMatrix, SpikeDistanceConfig, evaluate_event_sync, full_year_pair_distances,
)
from volume import PopulationSeries, event_volume_summary, population_volume

logger = setup_logging("signatures")

# Activities with a volume and a rhythm-disruption column, in table order
SIGNATURE_ACTIVITIES = (Activity.STEPS, Activity.SLEEP, Activity.HEART_RATE)

RANDOM_ROW = "Random"

SIGNATURE_COLUMNS = [
    "event", "steps", "sleep_hours", "heart_rate_bpm", "oos_sleep", "oos_growth_sleep",
    "rhythm_disruption_steps", "rhythm_disruption_sleep", "rhythm_disruption_heart_rate",
]


@dataclass(frozen=True)
class SignatureConfig:
    spike: SpikeDistanceConfig = field(default_factory=SpikeDistanceConfig)
    rhythm: RhythmConfig = field(default_factory=RhythmConfig)
    pair_budget: Optional[int] = None
    null_days: int = MetricConfig.DEFAULT_NULL_DAYS
    seed: int = 0
    alpha_days: int = MetricConfig.DEFAULT_ALPHA_DAYS
    exclude_event_windows: bool = False
    dbscan_eps: float = MetricConfig.DEFAULT_DBSCAN_EPS
    dbscan_min_pts: int = MetricConfig.DEFAULT_DBSCAN_MIN_PTS
    activities: Tuple[Activity, ...] = SIGNATURE_ACTIVITIES


@dataclass
class EventSignature:
    """One signature-table row; None marks a metric that could not be computed."""
    event_name: str
    steps_volume: Optional[float] = None
    sleep_volume_hours: Optional[float] = None
    hr_volume_bpm: Optional[float] = None
    oos_sleep: Optional[float] = None
    oos_growth_sleep: Optional[float] = None
    rhythm_disruption_steps: Optional[float] = None
    rhythm_disruption_sleep: Optional[float] = None
    rhythm_disruption_hr: Optional[float] = None
    missing: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("rhythm_disruption_steps", "rhythm_disruption_sleep", "rhythm_disruption_hr"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise DomainError(f"{name} must be >= 0, got {value}")
        if self.oos_growth_sleep is not None and self.oos_growth_sleep < -1:
            raise DomainError(f"oos_growth_sleep must be >= -1, got {self.oos_growth_sleep}")

    def as_row(self) -> List:
        return [self.event_name, self.steps_volume, self.sleep_volume_hours, self.hr_volume_bpm,
                self.oos_sleep, self.oos_growth_sleep, self.rhythm_disruption_steps,
                self.rhythm_disruption_sleep, self.rhythm_disruption_hr]


_VOLUME_FIELD = {
    Activity.STEPS: "steps_volume",
    Activity.SLEEP: "sleep_volume_hours",
    Activity.HEART_RATE: "hr_volume_bpm",
}
_DISRUPTION_FIELD = {
    Activity.STEPS: "rhythm_disruption_steps",
    Activity.SLEEP: "rhythm_disruption_sleep",
    Activity.HEART_RATE: "rhythm_disruption_hr",
}


def _volume_units(activity: Activity, value: float) -> float:
    return value / 60.0 if activity == Activity.SLEEP else value


class SignatureAnalysis:
    """
    Runs every event metric and null model once.

    Failures of a single metric are logged and recorded in `errors` (and as the
    row's missing cell) instead of aborting the run.
    """

    def __init__(self, cohort: Cohort, events: Sequence[EventSpec], cfg: Optional[SignatureConfig] = None):
        self.cohort = cohort
        self.events = list(events)
        self.cfg = cfg or SignatureConfig()
        self.errors: List[str] = []
        self.series: Dict[Activity, PopulationSeries] = {}
        self.tables: Dict[Activity, RhythmTable] = {}
        self.null_dists: Dict[Activity, ShiftDistribution] = {}
        self.null_volumes: Dict[Activity, NullSummary] = {}
        self.null_oos: Optional[NullSummary] = None
        self.null_growth: Optional[NullSummary] = None
        self.threshold_source: Optional[PairDistanceMatrix] = None
        self.sync: Dict[str, EventSyncResult] = {}
        self.disruptions: Dict[str, Dict[Activity, DisruptionResult]] = {}
        self.rows: List[EventSignature] = []
        self._ran = False

    # -------------------------
    # Helpers
    # -------------------------
    def _attempt(self, context: ErrorContext, fn, row: Optional[EventSignature] = None,
                 cell: Optional[str] = None):
        try:
            return fn()
        except BiorhythmError as e:
            message = handle_metric_error(context, e, logger)
            self.errors.append(message)
            if row is not None and cell is not None:
                row.missing[cell] = message
            return None

    def exclusions(self) -> set:
        if not self.cfg.exclude_event_windows:
            return set()
        reach = max(self.cfg.alpha_days, self.cfg.rhythm.window_days)
        return event_window_dates(self.events, reach, reach)

    def series_for(self, activity: Activity) -> PopulationSeries:
        if activity not in self.series:
            self.series[activity] = population_volume(self.cohort, activity)
        return self.series[activity]

    def table_for(self, activity: Activity) -> RhythmTable:
        if activity not in self.tables:
            self.tables[activity] = rhythm_table(self.cohort, activity, self.cfg.rhythm)
        return self.tables[activity]

    # -------------------------
    # Null models
    # -------------------------
    def run_nulls(self) -> None:
        cfg = self.cfg
        excluded = self.exclusions()
        self.threshold_source = self._attempt(
            ErrorContext("full-year pair distances"),
            lambda: full_year_pair_distances(self.cohort, cfg.spike, cfg.pair_budget, cfg.seed))
        sync = self._attempt(
            ErrorContext("null OOS"),
            lambda: null_sync(self.cohort, cfg.alpha_days, cfg.null_days, cfg.seed, cfg.spike,
                              cfg.pair_budget, excluded, self.threshold_source,
                              with_growth=self.threshold_source is not None))
        if sync is not None:
            self.null_oos, self.null_growth = sync
            if self.null_growth is None and self.threshold_source is not None:
                self.errors.append("null OOS growth failed: undefined at every random day")
        for activity in self.cfg.activities:
            summary = self._attempt(
                ErrorContext("null volume", activity=activity.value),
                lambda: null_volume(self.cohort, activity, cfg.alpha_days, cfg.null_days, cfg.seed,
                                    excluded, self.series_for(activity)))
            if summary is not None:
                self.null_volumes[activity] = summary
            dist = self._attempt(
                ErrorContext("null shift distribution", activity=activity.value),
                lambda: null_shift_distribution(self.cohort, activity, None, cfg.null_days, cfg.seed,
                                                cfg.rhythm, excluded, self.table_for(activity)))
            if dist is not None:
                self.null_dists[activity] = dist

    # -------------------------
    # Events
    # -------------------------
    def run_event(self, event: EventSpec) -> EventSignature:
        cfg = self.cfg
        row = EventSignature(event_name=event.name)
        for activity in self.cfg.activities:
            value = self._attempt(
                ErrorContext("volume", event=event.name, activity=activity.value),
                lambda: event_volume_summary(self.cohort, activity, event, self.series_for(activity)),
                row, _VOLUME_FIELD[activity])
            if value is not None:
                setattr(row, _VOLUME_FIELD[activity], _volume_units(activity, value))

        result = self._attempt(
            ErrorContext("OOS", event=event.name, activity=Activity.SLEEP_ONSET.value),
            lambda: evaluate_event_sync(self.cohort, event, cfg.spike, cfg.pair_budget, cfg.seed,
                                        self.threshold_source,
                                        with_growth=self.threshold_source is not None),
            row, "oos_sleep")
        if result is not None:
            self.sync[event.name] = result
            row.oos_sleep = result.oos
            if result.growth is not None:
                row.oos_growth_sleep = result.growth
            else:
                reason = result.growth_error or "no full-year threshold source"
                message = f"OOS growth failed for event {event.name}: {reason}"
                logger.warning(message)
                self.errors.append(message)
                row.missing["oos_growth_sleep"] = message

        self.disruptions[event.name] = {}
        for activity in self.cfg.activities:
            cell = _DISRUPTION_FIELD[activity]
            if activity not in self.null_dists:
                message = f"rhythm disruption failed for event {event.name} ({activity.value}): no null distribution"
                self.errors.append(message)
                row.missing[cell] = message
                continue
            res = self._attempt(
                ErrorContext("rhythm disruption", event=event.name, activity=activity.value),
                lambda: event_rhythm_disruption(self.cohort, activity, event, self.null_dists[activity],
                                                cfg.rhythm, self.table_for(activity)),
                row, cell)
            if res is not None:
                self.disruptions[event.name][activity] = res
                setattr(row, cell, res.kl)
        return row

    def random_row(self) -> EventSignature:
        row = EventSignature(event_name=RANDOM_ROW)
        for activity in self.cfg.activities:
            summary = self.null_volumes.get(activity)
            if summary is not None:
                setattr(row, _VOLUME_FIELD[activity], _volume_units(activity, summary.mean))
            else:
                row.missing[_VOLUME_FIELD[activity]] = "null volume unavailable"
            if activity in self.null_dists:
                # KL of the null against itself
                dist = self.null_dists[activity]
                setattr(row, _DISRUPTION_FIELD[activity], rhythm_disruption(dist, dist))
            else:
                row.missing[_DISRUPTION_FIELD[activity]] = "null distribution unavailable"
        if self.null_oos is not None:
            row.oos_sleep = self.null_oos.mean
        else:
            row.missing["oos_sleep"] = "null OOS unavailable"
        if self.null_growth is not None:
            row.oos_growth_sleep = self.null_growth.mean
        else:
            row.missing["oos_growth_sleep"] = "null OOS growth unavailable"
        return row

    def run(self) -> "SignatureAnalysis":
        if self._ran:
            return self
        self.run_nulls()
        self.rows = [self.run_event(e) for e in self.events]
        self.rows.append(self.random_row())
        self._ran = True
        return self

    def table(self) -> List[EventSignature]:
        return self.run().rows


def build_signature_table(cohort: Cohort, events: Sequence[EventSpec],
                          cfg: Optional[SignatureConfig] = None) -> List[EventSignature]:
    """
    One row per event plus a Random row built from the null models.

    Metric failures become missing cells (see EventSignature.missing).
    """
    return SignatureAnalysis(cohort, events, cfg).table()


def signature_frame(rows: Sequence[EventSignature]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in rows], columns=SIGNATURE_COLUMNS)


def write_signature_csv(rows: Sequence[EventSignature], path) -> Path:
    path = Path(path)
    signature_frame(rows).to_csv(path, index=False, na_rep="", lineterminator="\n")
    return path


# -------------------------
# Day features
# -------------------------
@dataclass(frozen=True)
class DayPoint:
    """A day in the standardized (volume, rhythm disruption) plane; cluster -1 is noise."""
    date: date
    volume_z: float
    disruption_z: float
    cluster_label: Optional[int] = None
    volume: Optional[float] = None
    disruption: Optional[float] = None


@dataclass
class DayFeatures:
    """Day points of one activity plus the number of days that could not be scored."""
    activity: Activity
    points: List[DayPoint]
    excluded_days: int = 0

    def __iter__(self) -> Iterator[DayPoint]:
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i) -> DayPoint:
        return self.points[i]


def standardize(values) -> np.ndarray:
    """z-scores with the population sd; a constant column maps to zeros."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x
    sd = float(np.std(x))
    if not np.isfinite(sd) or sd == 0.0:
        logger.warning("Standardizing a constant column; mapping it to zeros")
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def day_feature_points(cohort: Cohort, activity, cfg: Optional[SignatureConfig] = None,
                       table: Optional[RhythmTable] = None, null_dist: Optional[ShiftDistribution] = None,
                       series: Optional[PopulationSeries] = None) -> DayFeatures:
    """
    Per day d: volume (mean Ā over d - alpha .. d + alpha) and rhythm disruption
    (KL of the shift distribution at d against the global null), both standardized.

    Days whose windows do not fit or have no shifts are excluded and counted.
    """
    cfg = cfg or SignatureConfig()
    activity = Activity.parse(activity)
    table = table or rhythm_table(cohort, activity, cfg.rhythm)
    series = series or population_volume(cohort, activity)
    if null_dist is None:
        null_dist = null_shift_distribution(cohort, activity, None, cfg.null_days, cfg.seed, cfg.rhythm,
                                            table=table)
    alpha = cfg.alpha_days
    w = cfg.rhythm.window_days
    days, volumes, disruptions = [], [], []
    excluded = 0
    for d in range(cohort.n_days):
        if d - w < 0 or d + w > cohort.n_days or d - alpha < 0 or d + alpha + 1 > cohort.n_days:
            excluded += 1
            continue
        window = series.mean[d - alpha:d + alpha + 1]
        shifts, _ = table.shifts_at(d)
        if shifts.size == 0 or np.all(np.isnan(window)):
            excluded += 1
            continue
        days.append(cohort.date_at(d))
        volumes.append(float(np.nanmean(window)))
        disruptions.append(rhythm_disruption(distribution_for(shifts, cfg.rhythm), null_dist))
    if excluded:
        logger.info(f"Day features ({activity.value}): excluded {excluded} of {cohort.n_days} days")
    vz, dz = standardize(volumes), standardize(disruptions)
    points = [DayPoint(date=day, volume_z=float(v), disruption_z=float(k), volume=vol, disruption=dis)
              for day, v, k, vol, dis in zip(days, vz, dz, volumes, disruptions)]
    return DayFeatures(activity=activity, points=points, excluded_days=excluded)


# -------------------------
# Clustering
# -------------------------
def dbscan(points: Sequence[DayPoint], eps: float = MetricConfig.DEFAULT_DBSCAN_EPS,
           min_pts: int = MetricConfig.DEFAULT_DBSCAN_MIN_PTS) -> List[DayPoint]:
    """
    DBSCAN on (volume_z, disruption_z), Euclidean. Noise is -1.

    Points are clustered in date order and clusters numbered by their earliest
    member, so the partition does not depend on input order. Returned in input order.
    """
    points = list(points)
    if not points:
        raise DomainError("no points to cluster")
    if not eps > 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    if isinstance(min_pts, bool) or int(min_pts) != min_pts or min_pts < 1:
        raise ConfigError(f"min_pts must be an integer >= 1, got {min_pts}")
    order = sorted(range(len(points)),
                   key=lambda i: (points[i].date, points[i].volume_z, points[i].disruption_z))
    X = np.array([[points[i].volume_z, points[i].disruption_z] for i in order])
    raw = DBSCAN(eps=eps, min_samples=int(min_pts), metric="euclidean").fit_predict(X)
    canonical: Dict[int, int] = {}
    for label in raw:
        if label >= 0 and label not in canonical:
            canonical[label] = len(canonical)
    labels = np.empty(len(points), dtype=int)
    for pos, i in enumerate(order):
        labels[i] = canonical.get(int(raw[pos]), -1)
    return [replace(p, cluster_label=int(l)) for p, l in zip(points, labels)]


def silhouette(points: Sequence[DayPoint]) -> float:
    """
    Mean silhouette coefficient over clustered (non-noise) points.

    Raises:
        UndefinedSilhouetteError: fewer than two clusters
    """
    labeled = [p for p in points if p.cluster_label is not None and p.cluster_label >= 0]
    labels = np.array([p.cluster_label for p in labeled], dtype=int)
    n_clusters = np.unique(labels).size
    if n_clusters < 2:
        raise UndefinedSilhouetteError(f"silhouette needs at least 2 clusters, got {n_clusters}")
    if n_clusters == labels.size:
        # Every cluster is a single point
        return 0.0
    X = np.array([[p.volume_z, p.disruption_z] for p in labeled])
    return float(silhouette_score(X, labels, metric="euclidean"))


def cluster_summary(points: Sequence[DayPoint]) -> Dict:
    labels = [p.cluster_label for p in points if p.cluster_label is not None]
    summary = {
        "n_points": len(points),
        "n_clusters": len({l for l in labels if l >= 0}),
        "n_noise": sum(1 for l in labels if l < 0),
        "silhouette": None,
        "silhouette_error": None,
    }
    try:
        summary["silhouette"] = silhouette(points)
    except UndefinedSilhouetteError as e:
        summary["silhouette_error"] = str(e)
    return summary


def write_day_points_csv(points: Sequence[DayPoint], path) -> Path:
    """CSV date,volume_z,disruption_z,cluster."""
    path = Path(path)
    pd.DataFrame({
        "date": [p.date.isoformat() for p in points],
        "volume_z": [p.volume_z for p in points],
        "disruption_z": [p.disruption_z for p in points],
        "cluster": [p.cluster_label if p.cluster_label is not None else -1 for p in points],
    }).to_csv(path, index=False, lineterminator="\n")
    return path

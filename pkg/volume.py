"""
volume.py
---------

Population-level activity volume.

Ā(t) is the mean of an activity over the users measured on day t, reported
with a 95% confidence half-width. The volume of an event is the mean of Ā(t)
over the symmetric window [t - alpha, t + alpha].

Classes:
- PopulationSeries: Daily mean, CI half-width and contributing-user count

Functions:
- population_volume: Ā(t) for one activity
- event_volume_summary: mean Ā(t) around an event
- write_volume_csv: date,mean,ci_halfwidth,n export
"""

from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from activity_types import Activity, Cohort, EventSpec
from error_handling import setup_logging, MetricConfig, DomainError, InsufficientDataError

logger = setup_logging("volume")


@dataclass(frozen=True, eq=False)
class PopulationSeries:
    """
    Ā(t) per day. mean is NaN where no user was measured; ci_halfwidth is NaN
    where fewer than two users were.
    """
    activity: Activity
    dates: pd.DatetimeIndex
    mean: np.ndarray
    ci_halfwidth: np.ndarray
    n: np.ndarray

    def __len__(self) -> int:
        return int(self.mean.size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "date": self.dates.strftime("%Y-%m-%d"),
            "mean": self.mean,
            "ci_halfwidth": self.ci_halfwidth,
            "n": self.n,
        })


def population_volume(cohort: Cohort, activity) -> PopulationSeries:
    """
    Per-day mean over users with a measurement, CI = 1.96 x standard error.

    Raises:
        DomainError: cohort has no users
    """
    activity = Activity.parse(activity)
    if cohort.n_users == 0:
        raise DomainError("population volume needs a nonempty cohort")
    mat = cohort.matrix(activity)
    present = ~np.isnan(mat)
    n = present.sum(axis=0)
    filled = np.where(present, mat, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n >= 1, filled.sum(axis=0) / np.maximum(n, 1), np.nan)
        sq = np.where(present, (mat - mean[None, :]) ** 2, 0.0).sum(axis=0)
        sd = np.sqrt(sq / np.maximum(n - 1, 1))
        ci = np.where(n >= 2, MetricConfig.Z_95 * sd / np.sqrt(np.maximum(n, 1)), np.nan)
    return PopulationSeries(activity=activity, dates=cohort.dates(), mean=mean, ci_halfwidth=ci,
                            n=n.astype(int))


def event_volume_summary(cohort: Cohort, activity, event: EventSpec,
                         series: Optional[PopulationSeries] = None) -> float:
    """
    Mean of Ā(t) over days t - alpha ... t + alpha.

    Raises:
        DomainError: window outside the cohort interval
        InsufficientDataError: no measurement anywhere in the window
    """
    t = event.require_window(cohort, before_days=event.alpha_days, after_days=event.alpha_days + 1)
    series = series or population_volume(cohort, activity)
    window = series.mean[t - event.alpha_days:t + event.alpha_days + 1]
    if np.all(np.isnan(window)):
        raise InsufficientDataError(f"no {series.activity.value} measurements around '{event.name}'")
    return float(np.nanmean(window))


def write_volume_csv(series: PopulationSeries, path) -> Path:
    path = Path(path)
    series.to_frame().to_csv(path, index=False, na_rep="", lineterminator="\n")
    return path

"""
activity_types.py
-----------------

Core data classes for daily activity records, cohorts, spike trains and
collective events.

Classes:
- Activity: The measured activity kinds (steps, sleep, sleep onset, heart rate)
- ActivityRecord: One user-day of measurements
- Cohort: Immutable set of users and their daily records over an interval
- SpikeTrain: Ordered nightly sleep-onset times of one user
- DailySeries: One value per day for one user or a population average
- EventSpec: A named collective event with its buffer window
"""

from __future__ import annotations
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from error_handling import ConfigError, DomainError, UnknownUserError, MetricConfig


# Canonical CSV header, in order
RECORD_COLUMNS = [
    "user_id", "date", "steps", "sleep_minutes",
    "sleep_onset_min", "onset_next_day", "heart_rate_bpm",
]

RECORD_DTYPES = {
    "steps": "Int64",
    "sleep_minutes": "Float64",
    "sleep_onset_min": "Float64",
    "onset_next_day": "Int64",
    "heart_rate_bpm": "Float64",
}


class Activity(str, Enum):
    """Activity kinds measured once per user-day."""
    STEPS = "steps"
    SLEEP = "sleep"
    SLEEP_ONSET = "sleep_onset"
    HEART_RATE = "heart_rate"

    @property
    def column(self) -> str:
        """Record column holding this activity."""
        return {
            Activity.STEPS: "steps",
            Activity.SLEEP: "sleep_minutes",
            Activity.SLEEP_ONSET: "sleep_onset_min",
            Activity.HEART_RATE: "heart_rate_bpm",
        }[self]

    @classmethod
    def parse(cls, value) -> "Activity":
        """Accept enum members, values, column names and short aliases."""
        if isinstance(value, Activity):
            return value
        key = str(value).strip().lower()
        aliases = {
            "steps": cls.STEPS,
            "sleep": cls.SLEEP, "sleep_minutes": cls.SLEEP,
            "sleep_onset": cls.SLEEP_ONSET, "sleep_onset_min": cls.SLEEP_ONSET, "onset": cls.SLEEP_ONSET,
            "heart_rate": cls.HEART_RATE, "heart_rate_bpm": cls.HEART_RATE, "heart": cls.HEART_RATE, "hr": cls.HEART_RATE,
        }
        if key not in aliases:
            raise ConfigError(f"Unknown activity '{value}'. Choose one of: {[a.value for a in cls]}")
        return aliases[key]


@dataclass(frozen=True)
class ActivityRecord:
    """
    One user-day of measurements.

    Missing measurements are None; sleep_onset is minutes since local midnight,
    and onset_next_day marks onsets that fall after midnight of the labeled date.
    """
    user_id: str
    date: date
    steps: Optional[int] = None
    sleep_minutes: Optional[float] = None
    sleep_onset: Optional[float] = None
    onset_next_day: bool = False
    heart_rate: Optional[float] = None


def _none_if_na(value):
    return None if value is pd.NA or value is None or (isinstance(value, float) and np.isnan(value)) else value


@dataclass(frozen=True, eq=False)
class Cohort:
    """
    Immutable set of users and their daily records over [start_date, end_date].

    Records live in a pandas frame with the canonical columns, sorted by
    (user_id, date); per-activity user x day matrices are built lazily and cached.
    """
    users: Tuple[str, ...]
    start_date: date
    end_date: date
    frame: pd.DataFrame = field(repr=False)
    rejected_rows: Tuple = field(default=(), repr=False)
    _cache: Dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.end_date < self.start_date:
            raise DomainError(f"Cohort interval is reversed: {self.start_date} > {self.end_date}")
        object.__setattr__(self, "users", tuple(sorted(set(self.users))))
        frame = self.frame
        if len(frame) > 0:
            unknown = set(frame["user_id"].unique()) - set(self.users)
            if unknown:
                raise DomainError(f"Records reference users outside the cohort: {sorted(unknown)[:5]}")
            first, last = frame["date"].min().date(), frame["date"].max().date()
            if first < self.start_date or last > self.end_date:
                raise DomainError(f"Record dates {first}..{last} fall outside the interval "
                                  f"{self.start_date}..{self.end_date}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        return (self.users == other.users
                and self.start_date == other.start_date
                and self.end_date == other.end_date
                and self.frame.reset_index(drop=True).equals(other.frame.reset_index(drop=True)))

    __hash__ = None

    # -------------------------
    # Interval helpers
    # -------------------------
    @property
    def n_days(self) -> int:
        return (self.end_date - self.start_date).days + 1

    @property
    def n_users(self) -> int:
        return len(self.users)

    def day_index(self, day: date) -> int:
        """Index of a calendar day relative to start_date (not range-checked)."""
        return (day - self.start_date).days

    def date_at(self, index: int) -> date:
        return self.start_date + timedelta(days=int(index))

    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_date, self.end_date, freq="D")

    def require_user(self, user_id: str) -> int:
        """Row of a user in the cached matrices; raises UnknownUserError."""
        index = self._user_index()
        if user_id not in index:
            raise UnknownUserError(f"User '{user_id}' is not in the cohort")
        return index[user_id]

    def _user_index(self) -> Dict[str, int]:
        if "user_index" not in self._cache:
            self._cache["user_index"] = {u: i for i, u in enumerate(self.users)}
        return self._cache["user_index"]

    # -------------------------
    # Record access
    # -------------------------
    def records(self, user_id: str) -> Dict[date, ActivityRecord]:
        """Per-user map date -> ActivityRecord."""
        self.require_user(user_id)
        rows = self.frame[self.frame["user_id"] == user_id]
        out: Dict[date, ActivityRecord] = {}
        for row in rows.itertuples(index=False):
            day = row.date.date()
            flag = _none_if_na(row.onset_next_day)
            out[day] = ActivityRecord(
                user_id=row.user_id,
                date=day,
                steps=_none_if_na(row.steps),
                sleep_minutes=_none_if_na(row.sleep_minutes),
                sleep_onset=_none_if_na(row.sleep_onset_min),
                onset_next_day=bool(flag) if flag is not None else False,
                heart_rate=_none_if_na(row.heart_rate_bpm),
            )
        return out

    def _codes(self) -> Tuple[np.ndarray, np.ndarray]:
        if "codes" not in self._cache:
            user_codes = pd.Categorical(self.frame["user_id"], categories=list(self.users)).codes
            day_codes = (self.frame["date"] - pd.Timestamp(self.start_date)).dt.days.to_numpy()
            self._cache["codes"] = (np.asarray(user_codes, dtype=int), np.asarray(day_codes, dtype=int))
        return self._cache["codes"]

    def matrix(self, activity) -> np.ndarray:
        """
        Users x days matrix of one activity (NaN = missing). Rows follow self.users.

        The returned array is read-only and shared between callers.
        """
        activity = Activity.parse(activity)
        key = ("matrix", activity)
        if key not in self._cache:
            mat = np.full((self.n_users, self.n_days), np.nan)
            if len(self.frame) > 0:
                rows, cols = self._codes()
                mat[rows, cols] = self.frame[activity.column].to_numpy(dtype=float, na_value=np.nan)
            mat.setflags(write=False)
            self._cache[key] = mat
        return self._cache[key]

    def onset_times(self) -> np.ndarray:
        """
        Users x nights matrix of sleep-onset times in fractional days from start_date.

        Night d contributes d + onset/1440, plus one day when flagged next-day.
        """
        key = ("onset_times",)
        if key not in self._cache:
            onset = self.matrix(Activity.SLEEP_ONSET)
            flags = np.zeros((self.n_users, self.n_days))
            if len(self.frame) > 0:
                rows, cols = self._codes()
                flags[rows, cols] = self.frame["onset_next_day"].to_numpy(dtype=float, na_value=0.0)
            days = np.arange(self.n_days, dtype=float)[None, :]
            times = days + flags + onset / MetricConfig.MINUTES_PER_DAY
            times.setflags(write=False)
            self._cache[key] = times
        return self._cache[key]

    def subset(self, users: Iterable[str]) -> "Cohort":
        """Cohort restricted to the given users, same interval."""
        keep = sorted(set(users))
        for u in keep:
            self.require_user(u)
        frame = self.frame[self.frame["user_id"].isin(keep)].reset_index(drop=True)
        return Cohort(users=tuple(keep), start_date=self.start_date, end_date=self.end_date, frame=frame)

    def __repr__(self) -> str:
        return (f"Cohort(users={self.n_users}, interval={self.start_date}..{self.end_date}, "
                f"records={len(self.frame)})")


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    """
    Strictly increasing spike times (fractional days) inside [0, T].

    user_id is carried for error messages only.
    """
    spikes: np.ndarray
    interval: Tuple[float, float]
    user_id: Optional[str] = None

    def __post_init__(self):
        spikes = np.asarray(self.spikes, dtype=float)
        object.__setattr__(self, "spikes", spikes)
        lo, hi = float(self.interval[0]), float(self.interval[1])
        object.__setattr__(self, "interval", (lo, hi))
        if spikes.ndim != 1:
            raise DomainError("spike times must be one-dimensional")
        if spikes.size:
            if spikes[0] < lo or spikes[-1] > hi:
                raise DomainError(f"spikes must lie within [{lo}, {hi}]")
            if np.any(np.diff(spikes) <= 0):
                raise DomainError("spike times must be strictly increasing")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return self.interval == other.interval and np.array_equal(self.spikes, other.spikes)

    __hash__ = None

    def __len__(self) -> int:
        return int(self.spikes.size)

    def within(self, t1: float, t2: float) -> np.ndarray:
        """Spike times inside [t1, t2]."""
        s = self.spikes
        return s[(s >= t1) & (s <= t2)]

    def shifted(self, offset: float) -> "SpikeTrain":
        lo, hi = self.interval
        return SpikeTrain(self.spikes + offset, (lo + offset, hi + offset), self.user_id)


@dataclass(frozen=True, eq=False)
class DailySeries:
    """One value per day from start_date; NaN marks a missing day."""
    start_date: date
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DomainError("daily series must be one-dimensional")
        object.__setattr__(self, "values", values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return self.start_date == other.start_date and np.array_equal(self.values, other.values, equal_nan=True)

    __hash__ = None

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_date, periods=len(self), freq="D")


@dataclass(frozen=True)
class EventSpec:
    """
    A named collective event on event_date with a buffer window of alpha_days.

    Windowed metrics use [t - alpha, t] before and [t, t + alpha] after.
    """
    name: str
    event_date: date
    alpha_days: int = MetricConfig.DEFAULT_ALPHA_DAYS

    def __post_init__(self):
        if isinstance(self.alpha_days, bool) or int(self.alpha_days) != self.alpha_days or self.alpha_days < 1:
            raise ConfigError(f"alpha_days must be a positive integer, got {self.alpha_days}")
        if not str(self.name).strip():
            raise ConfigError("event name must be non-empty")

    def day_index(self, cohort: Cohort) -> int:
        return cohort.day_index(self.event_date)

    def require_window(self, cohort: Cohort, before_days: Optional[int] = None,
                       after_days: Optional[int] = None) -> int:
        """
        Check that [t - before, t + after) nights fit in the cohort interval.

        Returns:
            The event's day index t
        """
        before = self.alpha_days if before_days is None else before_days
        after = self.alpha_days if after_days is None else after_days
        t = self.day_index(cohort)
        if t - before < 0 or t + after > cohort.n_days:
            raise DomainError(
                f"Event '{self.name}' window [{self.event_date - timedelta(days=before)}, "
                f"{self.event_date + timedelta(days=after)}] is outside the cohort interval "
                f"{cohort.start_date}..{cohort.end_date}")
        return t

    def slug(self) -> str:
        """File-name friendly event name."""
        keep = [c.lower() if c.isalnum() else "_" for c in str(self.name).strip()]
        return "_".join(part for part in "".join(keep).split("_") if part) or "event"

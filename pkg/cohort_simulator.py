"""
cohort_simulator.py
-------------------

Seeded synthetic cohorts of daily activity with injectable event effects.

Every user gets baselines drawn once (between-user variation) and daily values
drawn around them, with weekly structure in steps, sleep and heart rate. Event
effects act on a seeded subset of users for a number of days: they widen the
sleep-onset spread (desynchronization), shift sleep/heart-rate/steps levels
(volume) or replace the weekly cycle by another period (rhythm).

Random streams are split per user and per field with numpy SeedSequence, and
effects only transform the draws, so adding an effect never changes values
outside its window or its affected users.

Classes:
- CohortSpec: Population parameters of a synthetic cohort
- EventEffect: One injected event and its effects

Functions:
- generate_cohort: CohortSpec + effects -> Cohort
- export_cohort: write the canonical CSV
"""

from __future__ import annotations
from dataclasses import dataclass, fields
from datetime import date, timedelta
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from activity_types import Cohort
from cohort_loader import build_cohort, write_cohort_csv
from error_handling import setup_logging, MetricConfig, ConfigError

logger = setup_logging("cohort_simulator")

# Stream keys: (_USER_STREAM, user, field) and (_EFFECT_STREAM, effect)
_USER_STREAM = 0
_EFFECT_STREAM = 1
_BASELINE, _ONSET, _SLEEP, _STEPS, _HEART, _MISSING = range(6)

# Output bounds (strictly inside the ingestion bounds)
_ONSET_RANGE = (720.0, 2159.9)   # noon .. noon next day, minutes
_HR_RANGE = (20.1, 249.9)


@dataclass(frozen=True)
class CohortSpec:
    """
    Synthetic population. Minutes for sleep and onset, bpm for heart rate.

    *_user_sd fields are the between-user spread of each baseline; the plain
    *_sd fields are the day-to-day noise around it.
    """
    n_users: int = 100
    days: int = 365
    seed: int = 0
    start_date: date = date(2016, 4, 1)
    onset_mean_min: float = 1410.0
    onset_sd_min: float = 30.0
    onset_user_sd_min: float = 20.0
    sleep_mean_min: float = 432.0
    sleep_sd_min: float = 40.0
    sleep_user_sd_min: float = 25.0
    sleep_weekend_extra_min: float = 30.0
    steps_weekday: float = 7200.0
    steps_weekend: float = 5200.0
    steps_sd: float = 1500.0
    steps_user_sd: float = 1000.0
    hr_mean_bpm: float = 71.0
    hr_sd_bpm: float = 3.0
    hr_user_sd_bpm: float = 5.0
    hr_weekly_amplitude_bpm: float = 1.0
    missing_rate: float = 0.0

    def __post_init__(self):
        for name in ("n_users", "days"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value}")
        for f in fields(self):
            if f.name.endswith("_sd") or "_sd_" in f.name:
                if getattr(self, f.name) < 0:
                    raise ConfigError(f"{f.name} must be >= 0, got {getattr(self, f.name)}")
        if not (0.0 <= self.missing_rate < 1.0):
            raise ConfigError(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        if self.steps_weekday < 0 or self.steps_weekend < 0:
            raise ConfigError("step means must be >= 0")

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=int(self.days) - 1)

    def user_ids(self) -> List[str]:
        width = max(4, len(str(self.n_users)))
        return [f"u{i + 1:0{width}d}" for i in range(self.n_users)]


@dataclass(frozen=True)
class EventEffect:
    """
    An injected event on [event_date, event_date + duration_days).

    onset_jitter_multiplier >= 1 scales the sleep-onset spread; the deltas
    shift daily means; period_override_days replaces the weekly cycle.
    """
    event_date: date
    duration_days: int = 14
    onset_jitter_multiplier: float = 1.0
    sleep_delta_min: float = 0.0
    hr_delta_bpm: float = 0.0
    steps_delta: float = 0.0
    period_override_days: Optional[float] = None
    affected_fraction: float = 1.0

    def __post_init__(self):
        if isinstance(self.duration_days, bool) or int(self.duration_days) != self.duration_days \
                or self.duration_days < 1:
            raise ConfigError(f"duration_days must be an integer >= 1, got {self.duration_days}")
        if not (0.0 < self.affected_fraction <= 1.0):
            raise ConfigError(f"affected_fraction must be in (0, 1], got {self.affected_fraction}")
        if self.onset_jitter_multiplier < 1.0:
            raise ConfigError(f"onset_jitter_multiplier must be >= 1, got {self.onset_jitter_multiplier}")
        if self.period_override_days is not None and not self.period_override_days >= 2.0:
            raise ConfigError(f"period_override_days must be >= 2, got {self.period_override_days}")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key)))


def _draws(spec: CohortSpec):
    n, days = spec.n_users, spec.days
    base = np.empty((n, 4))
    z = {f: np.empty((n, days)) for f in (_ONSET, _SLEEP, _STEPS, _HEART)}
    missing = np.empty((n, days, 4))
    for u in range(n):
        base[u] = _stream(spec.seed, _USER_STREAM, u, _BASELINE).standard_normal(4)
        for f in z:
            z[f][u] = _stream(spec.seed, _USER_STREAM, u, f).standard_normal(days)
        missing[u] = _stream(spec.seed, _USER_STREAM, u, _MISSING).random((days, 4))
    return base, z, missing


def _weekly(day_idx: np.ndarray, weekend: np.ndarray, period: np.ndarray, weekday_value: float,
            weekend_value: float) -> np.ndarray:
    """Weekday/weekend levels, or a cosine of the overridden period at the same amplitude."""
    regular = np.where(weekend, weekend_value, weekday_value)
    level = (5.0 * weekday_value + 2.0 * weekend_value) / 7.0
    amplitude = abs(weekday_value - weekend_value) / 2.0
    with np.errstate(invalid="ignore"):
        override = level + amplitude * np.cos(2.0 * np.pi * day_idx / period)
    return np.where(np.isnan(period), regular, override)


def generate_cohort(spec: CohortSpec, effects: Sequence[EventEffect] = ()) -> Cohort:
    """
    Draw a cohort. Deterministic in (spec, effects).

    Raises:
        ConfigError: an effect window outside [0, days)
    """
    n, days = spec.n_users, spec.days
    base, z, missing = _draws(spec)

    jitter = np.ones((n, days))
    sleep_delta = np.zeros((n, days))
    hr_delta = np.zeros((n, days))
    steps_delta = np.zeros((n, days))
    period = np.full((n, days), np.nan)
    for k, effect in enumerate(effects):
        d0 = (effect.event_date - spec.start_date).days
        d1 = d0 + int(effect.duration_days)
        if d0 < 0 or d1 > days:
            raise ConfigError(f"effect window {effect.event_date} + {effect.duration_days} days lies outside "
                              f"{spec.start_date}..{spec.end_date}")
        size = max(1, int(round(effect.affected_fraction * n)))
        users = np.sort(_stream(spec.seed, _EFFECT_STREAM, k).choice(n, size=size, replace=False))
        block = np.ix_(users, np.arange(d0, d1))
        jitter[block] *= effect.onset_jitter_multiplier
        sleep_delta[block] += effect.sleep_delta_min
        hr_delta[block] += effect.hr_delta_bpm
        steps_delta[block] += effect.steps_delta
        if effect.period_override_days is not None:
            period[block] = effect.period_override_days
        logger.info(f"Effect {k} on {effect.event_date}: {size} user(s), days {d0}..{d1 - 1}")

    day_idx = np.arange(days, dtype=float)[None, :]
    weekday = np.array([(spec.start_date + timedelta(days=d)).weekday() for d in range(days)])
    weekend = (weekday >= 5)[None, :]

    onset = spec.onset_mean_min + spec.onset_user_sd_min * base[:, [0]] + spec.onset_sd_min * jitter * z[_ONSET]
    onset = np.clip(np.round(onset, 1), *_ONSET_RANGE)
    next_day = (onset >= MetricConfig.MINUTES_PER_DAY).astype(float)
    onset = np.round(onset - MetricConfig.MINUTES_PER_DAY * next_day, 1)

    sleep_weekly = _weekly(day_idx, weekend, period, 0.0, spec.sleep_weekend_extra_min)
    sleep = (spec.sleep_mean_min + spec.sleep_user_sd_min * base[:, [1]] + sleep_weekly + sleep_delta
             + spec.sleep_sd_min * z[_SLEEP])
    sleep = np.clip(np.round(sleep, 1), MetricConfig.MIN_SLEEP_MINUTES, MetricConfig.MAX_SLEEP_MINUTES)

    steps_weekly = _weekly(day_idx, weekend, period, spec.steps_weekday, spec.steps_weekend)
    steps = spec.steps_user_sd * base[:, [2]] + steps_weekly + steps_delta + spec.steps_sd * z[_STEPS]
    steps = np.maximum(np.rint(steps), 0.0)

    hr_cycle = np.where(np.isnan(period), 7.0, period)
    hr = (spec.hr_mean_bpm + spec.hr_user_sd_bpm * base[:, [3]]
          + spec.hr_weekly_amplitude_bpm * np.cos(2.0 * np.pi * day_idx / hr_cycle)
          + hr_delta + spec.hr_sd_bpm * z[_HEART])
    hr = np.clip(np.round(hr, 1), *_HR_RANGE)

    drop = missing < spec.missing_rate
    steps[drop[..., 0]] = np.nan
    sleep[drop[..., 1]] = np.nan
    onset[drop[..., 2]] = np.nan
    next_day[drop[..., 2]] = np.nan
    hr[drop[..., 3]] = np.nan

    users = spec.user_ids()
    frame = pd.DataFrame({
        "user_id": np.repeat(np.array(users, dtype=object), days),
        "date": np.tile(pd.date_range(spec.start_date, periods=days, freq="D").to_numpy(), n),
        "steps": steps.ravel(),
        "sleep_minutes": sleep.ravel(),
        "sleep_onset_min": onset.ravel(),
        "onset_next_day": next_day.ravel(),
        "heart_rate_bpm": hr.ravel(),
    })
    return build_cohort(frame, start_date=spec.start_date, end_date=spec.end_date, users=users)


def export_cohort(cohort: Cohort, path) -> Path:
    """Write the canonical CSV; parse_activity_csv reproduces the cohort."""
    return write_cohort_csv(cohort, path)

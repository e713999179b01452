"""
cohort_loader.py
----------------

Ingestion and conversion of daily activity data.

Reads the canonical activity CSV into an immutable Cohort (validating every
row against physiological bounds), writes cohorts back out, filters users by
measurement coverage, and converts cohort records into spike trains of sleep
onsets and regularly sampled daily series.

Functions:
- parse_activity_csv: CSV -> Cohort, with rejected-row report
- write_cohort_csv: Cohort -> canonical CSV
- build_cohort: normalize a record frame into a Cohort
- filter_by_coverage: keep users measured on enough days
- to_spike_train / spike_trains: nightly sleep onsets as spike trains
- filter_complete_trains: users with one onset per night around an event
- to_daily_series: one activity of one user as a DailySeries
"""

from __future__ import annotations
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np
import pandas as pd

from activity_types import (
    Activity, Cohort, DailySeries, EventSpec, SpikeTrain,
    RECORD_COLUMNS, RECORD_DTYPES,
)
from error_handling import (
    setup_logging, DomainError, DuplicateRecordError, IngestionError,
    validate_fraction, validate_heart_rate, validate_sleep_minutes, validate_sleep_onset,
    validate_steps,
)

logger = setup_logging("cohort_loader")


@dataclass(frozen=True)
class ColumnSchema:
    """
    Maps canonical record columns to the column names used in a file.

    attribute_columns lists extra per-row attributes (e.g. "city") that may be
    present and used for pre-filtering; they are not kept in the cohort.
    """
    columns: Mapping[str, str] = field(default_factory=lambda: {c: c for c in RECORD_COLUMNS})
    attribute_columns: Tuple[str, ...] = ()

    def __post_init__(self):
        missing = [c for c in RECORD_COLUMNS if c not in self.columns]
        if missing:
            raise IngestionError(f"schema is missing canonical columns: {missing}")

    def file_columns(self) -> List[str]:
        return [self.columns[c] for c in RECORD_COLUMNS] + list(self.attribute_columns)


@dataclass(frozen=True)
class RejectedRow:
    """A CSV row that violated an ActivityRecord invariant."""
    line: int
    user_id: str
    date: str
    reason: str


_LINE_RE = re.compile(r"line (\d+)")


# -------------------------
# Frame normalization
# -------------------------
def _normalize_frame(frame: pd.DataFrame) -> pd.DataFrame:
    out = pd.DataFrame({
        "user_id": frame["user_id"].astype(str).astype(object),
        "date": pd.to_datetime(frame["date"]).astype("datetime64[ns]"),
    })
    for col, dtype in RECORD_DTYPES.items():
        out[col] = pd.array(frame[col], dtype=dtype) if col in frame else pd.array([pd.NA] * len(frame), dtype=dtype)
    # A next-day flag without an onset carries no information
    out.loc[out["sleep_onset_min"].isna(), "onset_next_day"] = pd.NA
    out = out.sort_values(["user_id", "date"], kind="mergesort").reset_index(drop=True)
    return out[RECORD_COLUMNS]


def build_cohort(frame: pd.DataFrame, start_date: Optional[date] = None,
                 end_date: Optional[date] = None, users: Optional[Iterable[str]] = None,
                 rejected_rows: Tuple = ()) -> Cohort:
    """
    Normalize a record frame (canonical columns) into a Cohort.

    The interval defaults to the span of record dates and users default to the
    users present in the frame.
    """
    frame = _normalize_frame(frame)
    if start_date is None or end_date is None:
        if len(frame) == 0:
            raise IngestionError("cannot infer a cohort interval from zero records")
        start_date = start_date or frame["date"].min().date()
        end_date = end_date or frame["date"].max().date()
    user_set = set(frame["user_id"]) if users is None else set(users)
    duplicated = frame.duplicated(["user_id", "date"], keep=False)
    if duplicated.any():
        dup = frame.loc[duplicated, ["user_id", "date"]].drop_duplicates()
        raise DuplicateRecordError([(u, d.strftime("%Y-%m-%d")) for u, d in dup.itertuples(index=False)])
    return Cohort(users=tuple(user_set), start_date=start_date, end_date=end_date,
                  frame=frame, rejected_rows=tuple(rejected_rows))


# -------------------------
# CSV ingestion
# -------------------------
def _parse_numeric(raw: pd.Series, column: str, lines: pd.Series) -> pd.Series:
    text = raw.str.strip()
    values = pd.to_numeric(text.where(text != ""), errors="coerce")
    bad = (text != "") & values.isna()
    if bad.any():
        idx = bad.idxmax()
        raise IngestionError(f"column '{column}' has a non-numeric value '{raw[idx]}'", line=int(lines[idx]))
    return values


def _row_rejection(row) -> Optional[str]:
    checks = []
    if not np.isnan(row.steps):
        checks.append(validate_steps(row.steps))
    if not np.isnan(row.sleep_minutes):
        checks.append(validate_sleep_minutes(row.sleep_minutes))
    if not np.isnan(row.heart_rate_bpm):
        checks.append(validate_heart_rate(row.heart_rate_bpm))
    if not np.isnan(row.sleep_onset_min):
        flag = 0 if np.isnan(row.onset_next_day) else row.onset_next_day
        checks.append(validate_sleep_onset(row.sleep_onset_min, flag))
    elif not np.isnan(row.onset_next_day) and row.onset_next_day not in (0, 1):
        checks.append((False, f"onset_next_day must be 0 or 1, got {row.onset_next_day}"))
    reasons = [msg for ok, msg in checks if not ok]
    return "; ".join(reasons) if reasons else None


def parse_activity_csv(path, schema: Optional[ColumnSchema] = None,
                       attribute_filter: Optional[Mapping[str, str]] = None,
                       interval: Optional[Tuple[date, date]] = None) -> Cohort:
    """
    Read a daily-activity CSV into a validated Cohort.

    Args:
        path: CSV file path
        schema: Column mapping (defaults to the canonical header)
        attribute_filter: Keep only rows whose attribute columns match these values
        interval: Explicit (start, end) interval; rows outside it are rejected

    Returns:
        Cohort; rows violating record invariants are excluded and listed in
        cohort.rejected_rows

    Raises:
        IngestionError: missing file, header mismatch, malformed rows/values
        DuplicateRecordError: repeated (user_id, date)
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"input file not found: {path}")

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path} is empty", line=1)
    except pd.errors.ParserError as e:
        match = _LINE_RE.search(str(e))
        raise IngestionError(f"malformed CSV: {e}", line=int(match.group(1)) if match else None)

    expected = schema.file_columns()
    header = list(raw.columns)
    missing = [c for c in expected if c not in header]
    extra = [c for c in header if c not in expected]
    if missing or extra:
        raise IngestionError(f"header mismatch (missing={missing}, unexpected={extra})", line=1)

    # Line numbers as seen in the file (header is line 1)
    lines = pd.Series(np.arange(len(raw)) + 2, index=raw.index)

    if attribute_filter:
        for column, wanted in attribute_filter.items():
            if column not in schema.attribute_columns:
                raise IngestionError(f"attribute filter on undeclared column '{column}'")
            keep = raw[column].str.strip() == str(wanted)
            raw, lines = raw[keep], lines[keep]

    rename = {v: k for k, v in schema.columns.items()}
    data = raw.rename(columns=rename)

    user_ids = data["user_id"].str.strip()
    if (user_ids == "").any():
        raise IngestionError("empty user_id", line=int(lines[(user_ids == "").idxmax()]))
    date_text = data["date"].str.strip()
    dates = pd.to_datetime(date_text, format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        idx = dates.isna().idxmax()
        raise IngestionError(f"date '{date_text[idx]}' is not ISO-8601 YYYY-MM-DD", line=int(lines[idx]))

    parsed = pd.DataFrame({"user_id": user_ids, "date": dates})
    for col in RECORD_DTYPES:
        parsed[col] = _parse_numeric(data[col], col, lines)

    duplicated = parsed.duplicated(["user_id", "date"], keep=False)
    if duplicated.any():
        dup = parsed.loc[duplicated, ["user_id", "date"]].drop_duplicates()
        raise DuplicateRecordError([(u, d.strftime("%Y-%m-%d")) for u, d in dup.itertuples(index=False)])

    rejected: List[RejectedRow] = []
    keep_mask = np.ones(len(parsed), dtype=bool)
    numeric = parsed[list(RECORD_DTYPES)].astype(float)
    for pos, row in enumerate(numeric.itertuples(index=False)):
        reason = _row_rejection(row)
        if reason is None and interval is not None:
            day = parsed["date"].iloc[pos].date()
            if not (interval[0] <= day <= interval[1]):
                reason = f"date {day} outside interval {interval[0]}..{interval[1]}"
        if reason is not None:
            keep_mask[pos] = False
            rejected.append(RejectedRow(
                line=int(lines.iloc[pos]), user_id=parsed["user_id"].iloc[pos],
                date=parsed["date"].iloc[pos].strftime("%Y-%m-%d"), reason=reason))

    if rejected:
        logger.warning(f"Rejected {len(rejected)} of {len(parsed)} rows from {path.name} "
                       f"(first: line {rejected[0].line}: {rejected[0].reason})")

    kept = parsed[keep_mask]
    start, end = (interval if interval is not None else (None, None))
    if len(kept) == 0 and interval is None:
        raise IngestionError(f"no valid records in {path}")
    return build_cohort(kept, start_date=start, end_date=end, rejected_rows=tuple(rejected))


def write_cohort_csv(cohort: Cohort, path) -> Path:
    """
    Write a cohort as the canonical CSV (empty fields for missing values).

    parse_activity_csv on the written file reproduces the cohort exactly.
    """
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    frame = cohort.frame.copy()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n", columns=RECORD_COLUMNS)
    return path


# -------------------------
# Coverage filter
# -------------------------
def coverage_fractions(cohort: Cohort, activity) -> pd.Series:
    """Fraction of interval days with a measurement, per user."""
    mat = cohort.matrix(activity)
    if cohort.n_users == 0:
        return pd.Series(dtype=float)
    counts = np.sum(~np.isnan(mat), axis=1)
    return pd.Series(counts / cohort.n_days, index=list(cohort.users))


def filter_by_coverage(cohort: Cohort, activity, min_fraction: float) -> Cohort:
    """
    Keep users whose fraction of measured days is >= min_fraction.

    Idempotent, and monotone in min_fraction.
    """
    ok, message = validate_fraction(min_fraction, "min_fraction")
    if not ok:
        raise DomainError(message)
    if cohort.n_users == 0:
        return cohort
    fractions = coverage_fractions(cohort, activity)
    keep = fractions.index[fractions.to_numpy() >= min_fraction]
    dropped = cohort.n_users - len(keep)
    if dropped:
        logger.info(f"Coverage filter ({Activity.parse(activity).value} >= {min_fraction:.0%}) "
                    f"removed {dropped} of {cohort.n_users} users")
    return cohort.subset(keep)


# -------------------------
# Spike trains
# -------------------------
def _train_from_row(times: np.ndarray, n_days: int, user_id: str) -> SpikeTrain:
    spikes = times[~np.isnan(times)]
    spikes = spikes[(spikes >= 0.0) & (spikes <= n_days)]
    spikes = np.unique(spikes)
    return SpikeTrain(spikes, (0.0, float(n_days)), user_id)


def to_spike_train(cohort: Cohort, user: str) -> SpikeTrain:
    """
    Nightly sleep onsets of one user as a spike train on [0, n_days].

    Nights without an onset produce no spike.
    """
    row = cohort.require_user(user)
    return _train_from_row(cohort.onset_times()[row], cohort.n_days, user)


def spike_trains(cohort: Cohort, users: Optional[Iterable[str]] = None) -> Dict[str, SpikeTrain]:
    """Spike trains for many users at once, keyed by user id (sorted)."""
    users = cohort.users if users is None else sorted(users)
    times = cohort.onset_times()
    return {u: _train_from_row(times[cohort.require_user(u)], cohort.n_days, u) for u in users}


def filter_complete_trains(cohort: Cohort, event: EventSpec) -> Set[str]:
    """Users with a recorded onset on every night t - alpha ... t + alpha - 1."""
    t = event.require_window(cohort)
    onsets = cohort.matrix(Activity.SLEEP_ONSET)[:, t - event.alpha_days:t + event.alpha_days]
    complete = ~np.any(np.isnan(onsets), axis=1)
    return {u for u, ok in zip(cohort.users, complete) if ok}


# -------------------------
# Daily series
# -------------------------
def to_daily_series(cohort: Cohort, user: str, activity) -> DailySeries:
    """One value per interval day for one user and activity (NaN = missing)."""
    row = cohort.require_user(user)
    return DailySeries(cohort.start_date, np.array(cohort.matrix(activity)[row], dtype=float))

"""
test_data_model.py
------------------

Tests for activity_types.py and cohort_loader.py: CSV ingestion, coverage
filtering, spike-train and daily-series conversion.

Run with: python test_data_model.py
"""

import sys
import tempfile
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from activity_types import Activity, Cohort, EventSpec, RECORD_COLUMNS
from cohort_loader import (
    build_cohort, filter_by_coverage, filter_complete_trains, parse_activity_csv,
    to_daily_series, to_spike_train, write_cohort_csv,
)
from cohort_simulator import CohortSpec, generate_cohort
from error_handling import ConfigError, DomainError, DuplicateRecordError, IngestionError, UnknownUserError

HEADER = ",".join(RECORD_COLUMNS)
START = date(2016, 6, 1)


def _write(text: str) -> Path:
    folder = Path(tempfile.mkdtemp(prefix="biorhythm_test_"))
    path = folder / "cohort.csv"
    path.write_text(text, encoding="utf-8")
    return path


def _onset_cohort(onsets: dict, n_days: int, flags: dict = None) -> Cohort:
    """Cohort with sleep onsets only: {user: [minutes or None per day]}."""
    rows = []
    for user, values in onsets.items():
        for d, minutes in enumerate(values):
            if minutes is None:
                continue
            flag = (flags or {}).get((user, d), 0)
            rows.append({"user_id": user, "date": START + timedelta(days=d),
                         "sleep_onset_min": float(minutes), "onset_next_day": flag})
    frame = pd.DataFrame(rows, columns=["user_id", "date", "sleep_onset_min", "onset_next_day"])
    return build_cohort(frame, START, START + timedelta(days=n_days - 1), users=onsets.keys())


def _hr_cohort(days_measured: dict, n_days: int) -> Cohort:
    rows = [{"user_id": u, "date": START + timedelta(days=d), "heart_rate_bpm": 70.0}
            for u, days in days_measured.items() for d in days]
    frame = pd.DataFrame(rows, columns=["user_id", "date", "heart_rate_bpm"])
    return build_cohort(frame, START, START + timedelta(days=n_days - 1), users=days_measured.keys())


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------
def test_parse_valid_file():
    print("\n[TEST] Parsing a valid 3-row file")
    path = _write(f"{HEADER}\n"
                  "u1,2016-06-01,7000,420,1380,0,70\n"
                  "u1,2016-06-02,6500,400,15,1,71.5\n"
                  "u2,2016-06-01,,450,,,68\n")
    cohort = parse_activity_csv(path)
    assert cohort.users == ("u1", "u2")
    assert len(cohort.frame) == 3
    assert cohort.start_date == date(2016, 6, 1) and cohort.end_date == date(2016, 6, 2)
    assert not cohort.rejected_rows
    records = cohort.records("u1")
    assert records[date(2016, 6, 2)].onset_next_day is True
    assert records[date(2016, 6, 2)].heart_rate == 71.5
    assert cohort.records("u2")[date(2016, 6, 1)].steps is None
    print("[PASS] 2 users, 3 records")


def test_out_of_bounds_row_is_rejected():
    print("\n[TEST] Heart rate 300 is rejected, not fatal")
    path = _write(f"{HEADER}\n"
                  "u1,2016-06-01,7000,420,1380,0,70\n"
                  "u1,2016-06-02,7000,420,1380,0,300\n")
    cohort = parse_activity_csv(path)
    assert len(cohort.frame) == 1
    assert len(cohort.rejected_rows) == 1
    rejected = cohort.rejected_rows[0]
    assert rejected.line == 3
    assert "heart_rate_bpm" in rejected.reason
    print(f"[PASS] Rejected line {rejected.line}: {rejected.reason}")


def test_duplicate_rows_raise():
    print("\n[TEST] Duplicate (user, date) rows")
    path = _write(f"{HEADER}\n"
                  "u1,2016-06-01,7000,420,1380,0,70\n"
                  "u1,2016-06-01,7100,420,1380,0,70\n")
    with pytest.raises(DuplicateRecordError) as info:
        parse_activity_csv(path)
    assert ("u1", "2016-06-01") in info.value.offenders
    assert "u1" in str(info.value) and "2016-06-01" in str(info.value)
    print("[PASS] Duplicate reported with user and date")


def test_header_and_value_errors():
    print("\n[TEST] Malformed inputs")
    with pytest.raises(IngestionError) as info:
        parse_activity_csv(_write("user_id,date,steps\nu1,2016-06-01,10\n"))
    assert info.value.line == 1
    with pytest.raises(IngestionError) as info:
        parse_activity_csv(_write(f"{HEADER}\nu1,2016-06-01,many,420,1380,0,70\n"))
    assert info.value.line == 2
    with pytest.raises(IngestionError):
        parse_activity_csv(_write(f"{HEADER}\nu1,01/06/2016,7000,420,1380,0,70\n"))
    with pytest.raises(IngestionError):
        parse_activity_csv(Path(tempfile.mkdtemp()) / "missing.csv")
    print("[PASS] Header, value, date and missing-file errors raised")


def test_round_trip():
    print("\n[TEST] CSV round trip")
    cohort = generate_cohort(CohortSpec(n_users=10, days=30, seed=4, missing_rate=0.1))
    path = write_cohort_csv(cohort, Path(tempfile.mkdtemp()) / "out.csv")
    again = parse_activity_csv(path)
    assert again == cohort
    print(f"[PASS] {cohort!r} reproduced")


# ---------------------------------------------------------------------------
# Coverage filter
# ---------------------------------------------------------------------------
def test_filter_by_coverage():
    print("\n[TEST] Coverage filter")
    cohort = _hr_cohort({"full": range(365), "partial": range(300)}, 365)
    kept = filter_by_coverage(cohort, Activity.HEART_RATE, 0.9)
    assert kept.users == ("full",)
    assert filter_by_coverage(cohort, Activity.HEART_RATE, 0.0).users == ("full", "partial")
    # Idempotent and monotone
    assert filter_by_coverage(kept, Activity.HEART_RATE, 0.9) == kept
    loose = filter_by_coverage(cohort, Activity.HEART_RATE, 0.5)
    assert set(kept.users) <= set(loose.users)
    empty = cohort.subset([])
    assert filter_by_coverage(empty, Activity.HEART_RATE, 0.9).n_users == 0
    with pytest.raises(DomainError):
        filter_by_coverage(cohort, Activity.HEART_RATE, 1.5)
    print("[PASS] 365/365 kept, 300/365 removed at 0.9")


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------
def test_spike_train_arithmetic():
    print("\n[TEST] Spike times from onsets")
    cohort = _onset_cohort({"late": [1380, 1380, 1380], "after_midnight": [30, None, None],
                            "none": [None, None, None]}, 3, flags={("after_midnight", 0): 1})
    train = to_spike_train(cohort, "late")
    np.testing.assert_allclose(train.spikes, [0.958333, 1.958333, 2.958333], atol=1e-6)
    assert train.interval == (0.0, 3.0)
    np.testing.assert_allclose(to_spike_train(cohort, "after_midnight").spikes, [1.0208333], atol=1e-6)
    assert len(to_spike_train(cohort, "none")) == 0
    with pytest.raises(UnknownUserError):
        to_spike_train(cohort, "nobody")
    print("[PASS] 23:00 -> d + 0.9583, 00:30 next day -> 1.0208")


def test_spike_trains_from_random_cohorts_are_valid():
    print("\n[TEST] Spike-train invariants over random cohorts")
    for seed in range(5):
        cohort = generate_cohort(CohortSpec(n_users=5, days=20, seed=seed, missing_rate=0.2,
                                            onset_sd_min=240.0))
        for user in cohort.users:
            spikes = to_spike_train(cohort, user).spikes
            assert np.all(np.diff(spikes) > 0)
            assert spikes.size == 0 or (spikes[0] >= 0 and spikes[-1] <= cohort.n_days)
    print("[PASS] Strictly increasing and inside the interval")


def test_filter_complete_trains():
    print("\n[TEST] Complete trains around an event")
    full = [1380] * 20
    gap = list(full)
    gap[13] = None   # night t + 3
    cohort = _onset_cohort({"full": full, "gap": gap}, 20)
    event = EventSpec("e", START + timedelta(days=10), alpha_days=7)
    assert filter_complete_trains(cohort, event) == {"full"}
    short = EventSpec("e", START + timedelta(days=10), alpha_days=1)
    assert filter_complete_trains(cohort, short) == {"full", "gap"}
    with pytest.raises(DomainError):
        filter_complete_trains(cohort, EventSpec("late", START + timedelta(days=18), alpha_days=7))
    print("[PASS] Missing night t+3 excluded, alpha=1 minimal window accepted")


def test_daily_series():
    print("\n[TEST] Daily series")
    frame = pd.DataFrame({"user_id": ["a", "a"], "date": [START, START + timedelta(days=2)],
                          "heart_rate_bpm": [70.0, 72.0]})
    cohort = build_cohort(frame, START, START + timedelta(days=2), users=["a", "b"])
    series = to_daily_series(cohort, "a", "heart_rate")
    np.testing.assert_array_equal(series.values, [70.0, np.nan, 72.0])
    assert list(series.missing) == [False, True, False]
    empty = to_daily_series(cohort, "b", Activity.HEART_RATE)
    assert len(empty) == 3 and np.all(empty.missing)
    with pytest.raises(UnknownUserError):
        to_daily_series(cohort, "c", Activity.HEART_RATE)
    print("[PASS] [70, missing, 72] and all-missing series")


def test_activity_and_event_types():
    print("\n[TEST] Activity parsing and event helpers")
    assert Activity.parse("hr") is Activity.HEART_RATE
    assert Activity.parse("sleep_minutes") is Activity.SLEEP
    with pytest.raises(ConfigError):
        Activity.parse("calories")
    with pytest.raises(ConfigError):
        EventSpec("e", START, alpha_days=0)
    assert EventSpec("New Year's Eve", START).slug() == "new_year_s_eve"
    print("[PASS] Aliases, validation and slugs")


def run_all_tests():
    print("=" * 80)
    print("DATA MODEL TEST SUITE")
    print("=" * 80)
    tests = [
        test_parse_valid_file, test_out_of_bounds_row_is_rejected, test_duplicate_rows_raise,
        test_header_and_value_errors, test_round_trip, test_filter_by_coverage,
        test_spike_train_arithmetic, test_spike_trains_from_random_cohorts_are_valid,
        test_filter_complete_trains, test_daily_series, test_activity_and_event_types,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"[FAIL] {test.__name__}: {type(e).__name__}: {e}")
    print("\n" + "=" * 80)
    if failed:
        print(f"[ERROR] {failed} of {len(tests)} tests failed")
        return False
    print(f"[SUCCESS] All {len(tests)} data model tests passed")
    return True


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)

"""
test_signatures.py
------------------

Tests for signatures.py: the signature table with its Random row,
standardization, DBSCAN labelling and silhouette.

Run with: python test_signatures.py
"""

import sys
import tempfile
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from activity_types import Activity, EventSpec
from cohort_simulator import CohortSpec, EventEffect, generate_cohort
from error_handling import ConfigError, DomainError, UndefinedSilhouetteError
from null_model import null_shift_distribution
from rhythm import rhythm_table
from signatures import (
    RANDOM_ROW, SIGNATURE_COLUMNS, DayPoint, SignatureConfig, build_signature_table, cluster_summary,
    day_feature_points, dbscan, signature_frame, silhouette, standardize, write_day_points_csv,
    write_signature_csv,
)

SMALL = SignatureConfig(null_days=10, pair_budget=60, seed=1)


def _points(coords, start=date(2016, 1, 1)):
    return [DayPoint(start + timedelta(days=k), float(x), float(y)) for k, (x, y) in enumerate(coords)]


def _blobs(seed=0, n=30):
    rng = np.random.default_rng(seed)
    first = rng.normal([0.0, 0.0], 0.05, size=(n, 2))
    second = rng.normal([3.0, 3.0], 0.05, size=(n, 2))
    return _points(np.vstack([first, second]))


def test_random_row_only():
    print("\n[TEST] No events -> only the Random row")
    cohort = generate_cohort(CohortSpec(n_users=15, days=90, seed=2))
    rows = build_signature_table(cohort, [], SMALL)
    assert [r.event_name for r in rows] == [RANDOM_ROW]
    random_row = rows[0]
    assert random_row.rhythm_disruption_steps == 0.0
    assert random_row.rhythm_disruption_sleep == 0.0
    assert random_row.rhythm_disruption_hr == 0.0
    assert random_row.oos_sleep is not None
    assert 5.0 < random_row.sleep_volume_hours < 9.5
    print(f"[PASS] Random row: OOS {random_row.oos_sleep:+.4f}, sleep {random_row.sleep_volume_hours:.2f} h")


def test_signature_table_ranks_desync_event():
    print("\n[TEST] Signature table on an injected cohort")
    spec = CohortSpec(n_users=30, days=120, seed=5)
    desync_day = spec.start_date + timedelta(days=50)
    holiday_day = spec.start_date + timedelta(days=85)
    cohort = generate_cohort(spec, [
        EventEffect(desync_day, duration_days=10, onset_jitter_multiplier=4.0),
        EventEffect(holiday_day, duration_days=7, sleep_delta_min=90.0, steps_delta=-2500.0),
    ])
    events = [EventSpec("desync", desync_day), EventSpec("holiday", holiday_day)]
    rows = build_signature_table(cohort, events, SMALL)
    by_name = {r.event_name: r for r in rows}
    assert [r.event_name for r in rows] == ["desync", "holiday", RANDOM_ROW]
    assert by_name["desync"].oos_sleep == max(r.oos_sleep for r in rows)
    assert by_name["holiday"].steps_volume < by_name[RANDOM_ROW].steps_volume
    assert by_name["holiday"].sleep_volume_hours > by_name[RANDOM_ROW].sleep_volume_hours
    for row in rows:
        for value in (row.rhythm_disruption_steps, row.rhythm_disruption_sleep, row.rhythm_disruption_hr):
            assert value is None or value >= 0.0

    path = write_signature_csv(rows, Path(tempfile.mkdtemp()) / "signatures.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == SIGNATURE_COLUMNS
    assert frame["event"].tolist() == ["desync", "holiday", RANDOM_ROW]
    assert list(signature_frame(rows).columns) == SIGNATURE_COLUMNS
    print(f"[PASS] desync OOS {by_name['desync'].oos_sleep:+.4f} is the largest")


def test_metric_failure_becomes_missing_cell():
    print("\n[TEST] Event too close to the edge")
    cohort = generate_cohort(CohortSpec(n_users=10, days=90, seed=3))
    rows = build_signature_table(cohort, [EventSpec("early", cohort.date_at(3))], SMALL)
    early = rows[0]
    assert early.oos_sleep is None and "oos_sleep" in early.missing
    assert early.rhythm_disruption_sleep is None
    assert rows[-1].event_name == RANDOM_ROW
    print(f"[PASS] {len(early.missing)} missing cells recorded, run completed")


def test_standardize():
    print("\n[TEST] Standardization")
    z = standardize([1.0, 2.0, 3.0, 4.0, 10.0])
    assert abs(z.mean()) < 1e-12 and abs(z.std() - 1.0) < 1e-12
    np.testing.assert_allclose(standardize(z), z, atol=1e-12)
    np.testing.assert_array_equal(standardize([5.0, 5.0, 5.0]), [0.0, 0.0, 0.0])
    assert standardize([]).size == 0
    print("[PASS] mean 0, sd 1, idempotent, constant -> zeros")


def test_dbscan_two_blobs():
    print("\n[TEST] DBSCAN on two blobs")
    labelled = dbscan(_blobs(), eps=0.5, min_pts=4)
    labels = [p.cluster_label for p in labelled]
    assert set(labels) == {0, 1}
    assert labels[:30] == [0] * 30 and labels[30:] == [1] * 30
    summary = cluster_summary(labelled)
    assert summary["n_clusters"] == 2 and summary["n_noise"] == 0
    assert silhouette(labelled) > 0.9
    print(f"[PASS] 2 clusters, 0 noise, silhouette {silhouette(labelled):.3f}")


def test_dbscan_edge_cases():
    print("\n[TEST] DBSCAN edge cases")
    spread = _points([(float(k), 0.0) for k in range(10)])
    assert all(p.cluster_label == -1 for p in dbscan(spread, eps=0.01, min_pts=2))
    same = _points([(1.0, 1.0)] * 6)
    assert {p.cluster_label for p in dbscan(same, eps=0.1, min_pts=3)} == {0}
    with pytest.raises(DomainError):
        dbscan([])
    with pytest.raises(ConfigError):
        dbscan(spread, eps=0.0)
    with pytest.raises(ConfigError):
        dbscan(spread, eps=0.5, min_pts=0)
    with pytest.raises(UndefinedSilhouetteError):
        silhouette(dbscan(same, eps=0.1, min_pts=3))
    assert cluster_summary(dbscan(same, eps=0.1, min_pts=3))["silhouette_error"] is not None
    print("[PASS] Tiny eps -> all noise, identical points -> one cluster")


def test_dbscan_permutation_invariance():
    print("\n[TEST] DBSCAN does not depend on input order")
    points = _blobs(seed=4, n=20) + _points([(10.0, -10.0)], start=date(2017, 1, 1))
    base = {p.date: p.cluster_label for p in dbscan(points, eps=0.5, min_pts=4)}
    assert base[date(2017, 1, 1)] == -1
    rng = np.random.default_rng(9)
    for _ in range(5):
        shuffled = [points[i] for i in rng.permutation(len(points))]
        labels = {p.date: p.cluster_label for p in dbscan(shuffled, eps=0.5, min_pts=4)}
        assert labels == base
    print("[PASS] Same labels for 5 permutations; far point is noise")


def test_day_feature_points():
    print("\n[TEST] Per-day features")
    cohort = generate_cohort(CohortSpec(n_users=20, days=100, seed=7))
    features = day_feature_points(cohort, Activity.SLEEP, SMALL)
    # Days 28..72 fit both the rhythm window and the volume window
    assert len(features) == 45
    assert features.excluded_days == 55
    assert features[0].date == cohort.date_at(28)
    vz = np.array([p.volume_z for p in features])
    assert abs(vz.mean()) < 1e-9 and abs(vz.std() - 1.0) < 1e-9
    assert all(p.disruption >= 0.0 for p in features)
    labelled = dbscan(features, eps=0.5, min_pts=5)
    path = write_day_points_csv(labelled, Path(tempfile.mkdtemp()) / "day_points.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["date", "volume_z", "disruption_z", "cluster"]
    assert len(frame) == 45
    print(f"[PASS] 45 scored days, {cluster_summary(labelled)['n_clusters']} cluster(s)")


def _four_event_year(seed):
    spec = CohortSpec(n_users=30, days=365, seed=seed, steps_sd=300.0)
    start = spec.start_date
    effects = [
        EventEffect(start + timedelta(days=60), duration_days=30, steps_delta=2000.0),
        EventEffect(start + timedelta(days=130), duration_days=30, steps_delta=-2000.0),
        EventEffect(start + timedelta(days=200), duration_days=28, period_override_days=3.5),
        EventEffect(start + timedelta(days=280), duration_days=28, steps_delta=2000.0, period_override_days=3.5),
    ]
    event_dates = {e.event_date + timedelta(days=k) for e in effects for k in range(e.duration_days)}
    return generate_cohort(spec, effects), event_dates


def test_injected_event_types_form_clusters():
    print("\n[TEST] Four injected event types separate into DBSCAN clusters")
    seeds = range(11, 16)
    good = 0
    for seed in seeds:
        cohort, event_dates = _four_event_year(seed)
        cfg = SignatureConfig(seed=seed)
        table = rhythm_table(cohort, Activity.STEPS, cfg.rhythm)
        # Baseline shifts come from quiet days only
        null_dist = null_shift_distribution(cohort, Activity.STEPS, n=100, seed=seed, cfg=cfg.rhythm,
                                            exclusions=event_dates, table=table)
        features = day_feature_points(cohort, Activity.STEPS, cfg, table, null_dist)
        labelled = dbscan(features, eps=0.25, min_pts=10)
        summary = cluster_summary(labelled)
        score = silhouette(labelled) if summary["n_clusters"] >= 2 else float("nan")
        print(f"  seed {seed}: {summary['n_clusters']} clusters, {summary['n_noise']} noise, silhouette {score:.3f}")
        if summary["n_clusters"] >= 4 and score >= 0.3:
            good += 1
    assert good >= 4, f"only {good} of {len(seeds)} seeds separated the event types"
    print(f"[PASS] {good}/{len(seeds)} seeds with >= 4 clusters and silhouette >= 0.3")


def run_all_tests():
    print("=" * 80)
    print("SIGNATURE TEST SUITE")
    print("=" * 80)
    tests = [
        test_random_row_only, test_signature_table_ranks_desync_event, test_metric_failure_becomes_missing_cell,
        test_standardize, test_dbscan_two_blobs, test_dbscan_edge_cases, test_dbscan_permutation_invariance,
        test_day_feature_points, test_injected_event_types_form_clusters,
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
    print(f"[SUCCESS] All {len(tests)} signature tests passed")
    return True


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)

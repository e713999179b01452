"""
validate_system.py
------------------

Quick health check: imports every module, checks the third-party stack and
runs a few tiny computations. No full tests.

Usage:
    python validate_system.py
"""

import importlib
import sys
from pathlib import Path

checks_passed = 0
checks_failed = 0


def record(name, passed, details=""):
    global checks_passed, checks_failed
    print(f"{'[OK]  ' if passed else '[FAIL]'} {name}")
    if details and not passed:
        print(f"       Error: {details}")
    if passed:
        checks_passed += 1
    else:
        checks_failed += 1


def check_import(module_name):
    try:
        importlib.import_module(module_name)
        return True, ""
    except Exception as e:
        return False, f"{type(e).__name__}: {e}"


print("=" * 80)
print("BIORHYTHM METRICS - VALIDATION")
print("=" * 80)
print()

print("[1] Third-party stack")
print("-" * 40)
for package in ("numpy", "pandas", "scipy", "sklearn"):
    record(package, *check_import(package))
print()

print("[2] Modules")
print("-" * 40)
for module_name in ("error_handling", "activity_types", "cohort_loader", "spike_sync", "rhythm", "volume",
                    "null_model", "cohort_simulator", "signatures", "keyvalue_config", "analysis_builder",
                    "biorhythm_cli"):
    record(module_name, *check_import(module_name))
print()

print("[3] Smoke computations")
print("-" * 40)
try:
    import numpy as np
    from activity_types import Activity, SpikeTrain
    from cohort_simulator import CohortSpec, generate_cohort
    from rhythm import characteristic_rhythm
    from spike_sync import bivariate_spike_distance
    from volume import population_volume

    train = SpikeTrain(np.array([1.0, 2.0, 3.0]), (0.0, 4.0))
    record("identical trains have distance 0", bivariate_spike_distance(train, train, (0.0, 4.0)) == 0.0)

    weekly = np.sin(2.0 * np.pi * np.arange(28) / 7.0)
    record("weekly sine has a 7-day rhythm", characteristic_rhythm(weekly, (0, 28)) == 7.0)

    cohort = generate_cohort(CohortSpec(n_users=5, days=14, seed=1))
    series = population_volume(cohort, Activity.HEART_RATE)
    record("simulated cohort volume", cohort.n_users == 5 and int(series.n.min()) == 5)
except Exception as e:
    record("smoke computations", False, f"{type(e).__name__}: {e}")
print()

print("[4] Test suites")
print("-" * 40)
for test_file in ("test_data_model.py", "test_spike_sync.py", "test_rhythm.py", "test_volume.py",
                  "test_null_model.py", "test_simulator.py", "test_signatures.py", "test_cli.py",
                  "run_all_tests.py"):
    exists = (Path(__file__).parent / test_file).exists()
    record(test_file, exists, "" if exists else "File not found")
print()

print("=" * 80)
total = checks_passed + checks_failed
print(f"Total Checks: {total}")
print(f"Passed:       {checks_passed}")
print(f"Failed:       {checks_failed}")
print()
if checks_failed == 0:
    print("[SUCCESS] All validation checks passed!")
    sys.exit(0)
print(f"[FAILURE] {checks_failed} check(s) failed. Review the errors above.")
sys.exit(1)

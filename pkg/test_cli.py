"""
test_cli.py
-----------

End-to-end tests for biorhythm_cli.py: simulate, analyze and nullmodel on a
small synthetic cohort, exit codes and byte-identical reruns.

Run with: python test_cli.py
"""

import json
import sys
import tempfile
from pathlib import Path

import pandas as pd

import biorhythm_cli
from error_handling import EXIT_CONFIG_ERROR, EXIT_DATA_ERROR, EXIT_METRIC_FAILURE, EXIT_OK

SIM_SPEC = """\
# small cohort with one desynchronizing event
[cohort]
n_users = 20
days = 120
seed = 11
start_date = 2016-01-01

[effect]
event_date = 2016-02-20
duration_days = 10
onset_jitter_multiplier = 4
"""

RUN_TEMPLATE = """\
[run]
input = {input}
seed = 5
pair_budget = 40
null_days = 5
coverage_activity = none
{extra}
[event]
name = Desync Week
date = 2016-02-20
"""


def _workspace() -> Path:
    return Path(tempfile.mkdtemp(prefix="biorhythm_cli_"))


def _simulate(folder: Path) -> Path:
    spec = folder / "sim.cfg"
    spec.write_text(SIM_SPEC)
    out = folder / "cohort.csv"
    assert biorhythm_cli.main(["simulate", "--config", str(spec), "--out", str(out)]) == EXIT_OK
    return out


def _run_file(folder: Path, input_name: str = "cohort.csv", extra: str = "") -> Path:
    path = folder / "run.cfg"
    path.write_text(RUN_TEMPLATE.format(input=input_name, extra=extra))
    return path


def test_simulate():
    print("\n[TEST] simulate writes a deterministic CSV")
    folder = _workspace()
    first = _simulate(folder)
    frame = pd.read_csv(first)
    assert len(frame) == 20 * 120
    assert frame["user_id"].nunique() == 20
    copy = folder / "again.csv"
    assert biorhythm_cli.main(["simulate", "--config", str(folder / "sim.cfg"), "--out", str(copy)]) == EXIT_OK
    assert first.read_bytes() == copy.read_bytes()
    other = folder / "seeded.csv"
    assert biorhythm_cli.main(["simulate", "--config", str(folder / "sim.cfg"), "--out", str(other),
                               "--seed", "12"]) == EXIT_OK
    assert first.read_bytes() != other.read_bytes()
    print("[PASS] 2400 rows, identical reruns, --seed changes the draw")


def test_simulate_rejects_unknown_key():
    print("\n[TEST] simulate with an unknown spec key")
    folder = _workspace()
    spec = folder / "bad.cfg"
    spec.write_text("[cohort]\nn_users = 5\njitter = 3\n")
    code = biorhythm_cli.main(["simulate", "--config", str(spec), "--out", str(folder / "x.csv")])
    assert code == EXIT_CONFIG_ERROR
    assert not (folder / "x.csv").exists()
    print("[PASS] Exit code 2, nothing written")


def test_analyze_bundle():
    print("\n[TEST] analyze writes a complete, reproducible bundle")
    folder = _workspace()
    _simulate(folder)
    run = _run_file(folder)
    bundles = []
    for name in ("report_a", "report_b"):
        code = biorhythm_cli.main(["analyze", "--config", str(run), "--out", str(folder / name)])
        assert code in (EXIT_OK, EXIT_METRIC_FAILURE)
        bundles.append(folder / name)

    manifest = json.loads((bundles[0] / "manifest.json").read_text())
    written = sorted(p.name for p in bundles[0].iterdir() if p.name != "manifest.json")
    assert sorted(manifest["artifacts"]) == written
    assert manifest["seed"] == 5 and manifest["n_users"] == 20
    assert len(manifest["config_hash"]) == 64
    for expected in ("signatures.csv", "volume_steps.csv", "psd_sleep.csv", "oos_desync_week.json",
                     "pairs_desync_week_before.csv", "null_oos.json", "null_volume_heart_rate.json"):
        assert expected in written, expected

    for path in bundles[0].iterdir():
        assert path.read_bytes() == (bundles[1] / path.name).read_bytes(), path.name

    oos = json.loads((bundles[0] / "oos_desync_week.json").read_text())
    null = json.loads((bundles[0] / "null_oos.json").read_text())
    assert oos["oos"] > null["mean"]
    signatures = pd.read_csv(bundles[0] / "signatures.csv")
    assert signatures["event"].tolist() == ["Desync Week", "Random"]
    print(f"[PASS] {len(written)} artifacts, byte-identical rerun, OOS {oos['oos']:+.4f} > null {null['mean']:+.4f}")


def test_analyze_missing_input():
    print("\n[TEST] analyze with a missing input file")
    folder = _workspace()
    run = _run_file(folder, input_name="nowhere.csv")
    assert biorhythm_cli.main(["analyze", "--config", str(run), "--out", str(folder / "r")]) == EXIT_DATA_ERROR
    print("[PASS] Exit code 3")


def test_nullmodel():
    print("\n[TEST] nullmodel defaults and overrides")
    folder = _workspace()
    _simulate(folder)
    run = folder / "run.cfg"
    run.write_text("[run]\ninput = cohort.csv\nseed = 8\npair_budget = 30\ncoverage_activity = none\n")
    args = biorhythm_cli.parse_args(["nullmodel", "--config", str(run)])
    assert biorhythm_cli._run_config(args).null_days == 100

    out = folder / "nulls"
    code = biorhythm_cli.main(["nullmodel", "--config", str(run), "--out", str(out), "--null-days", "4"])
    assert code in (EXIT_OK, EXIT_METRIC_FAILURE)
    report = json.loads((out / "null_oos.json").read_text())
    assert report["seed"] == 8
    assert report["n_days"] + report["skipped_days"] == 4
    assert not (out / "signatures.csv").exists()

    code = biorhythm_cli.main(["nullmodel", "--config", str(run), "--null-days", "0"])
    assert code == EXIT_CONFIG_ERROR
    print("[PASS] null_days defaults to 100, seed echoed, --null-days 0 rejected")


def test_invalid_run_file():
    print("\n[TEST] analyze with an invalid run file")
    folder = _workspace()
    run = _run_file(folder, extra="pair_budget_max = 3\n")
    assert biorhythm_cli.main(["analyze", "--config", str(run)]) == EXIT_CONFIG_ERROR
    assert biorhythm_cli.main(["analyze", "--config", str(folder / "absent.cfg")]) == EXIT_CONFIG_ERROR
    print("[PASS] Unknown key and missing run file -> exit code 2")


def test_spike_variant_paper():
    print("\n[TEST] analyze with --spike-variant paper")
    folder = _workspace()
    _simulate(folder)
    args = biorhythm_cli.parse_args(["analyze", "--config", "x.cfg", "--spike-variant", "paper"])
    assert args.spike_variant == "paper"
    run = _run_file(folder)
    out = folder / "verbatim"
    code = biorhythm_cli.main(["analyze", "--config", str(run), "--out", str(out), "--spike-variant", "paper"])
    assert code in (EXIT_OK, EXIT_METRIC_FAILURE)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["spike"]["variant"] == "paper"
    assert json.loads((out / "oos_desync_week.json").read_text())["variant"] == "paper"

    from_file = _run_file(folder, extra="spike_variant = paper-verbatim\n")
    assert biorhythm_cli._run_config(biorhythm_cli.parse_args(["analyze", "--config", str(from_file)])
                                     ).spike.variant == "paper"
    print("[PASS] Flag and run-file names select the unnormalized variant")


def test_output_directory_reuse():
    print("\n[TEST] Rerun into an existing output directory")
    folder = _workspace()
    _simulate(folder)
    run = folder / "run.cfg"
    run.write_text("[run]\ninput = cohort.csv\nseed = 8\npair_budget = 30\nnull_days = 3\ncoverage_activity = none\n")
    out = folder / "nulls"
    assert biorhythm_cli.main(["nullmodel", "--config", str(run), "--out", str(out)]) in (EXIT_OK, EXIT_METRIC_FAILURE)

    # An earlier bundle that listed one more artifact
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["artifacts"]["null_stale.json"] = {"sha256": "0" * 64}
    manifest_path.write_text(json.dumps(manifest))
    (out / "null_stale.json").write_text("{}\n")

    assert biorhythm_cli.main(["nullmodel", "--config", str(run), "--out", str(out)]) in (EXIT_OK, EXIT_METRIC_FAILURE)
    listed = set(json.loads(manifest_path.read_text())["artifacts"])
    assert {p.name for p in out.iterdir()} == listed | {"manifest.json"}
    assert "null_stale.json" not in listed

    (out / "notes.txt").write_text("keep me\n")
    assert biorhythm_cli.main(["nullmodel", "--config", str(run), "--out", str(out)]) == EXIT_CONFIG_ERROR
    assert (out / "notes.txt").read_text() == "keep me\n"
    print("[PASS] Earlier bundle replaced, foreign files refused")


def run_all_tests():
    print("=" * 80)
    print("COMMAND-LINE TEST SUITE")
    print("=" * 80)
    tests = [
        test_simulate, test_simulate_rejects_unknown_key, test_analyze_bundle, test_analyze_missing_input,
        test_nullmodel, test_invalid_run_file, test_spike_variant_paper, test_output_directory_reuse,
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
    print(f"[SUCCESS] All {len(tests)} command-line tests passed")
    return True


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)

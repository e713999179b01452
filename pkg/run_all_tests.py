"""
run_all_tests.py
----------------

Runs every test suite in its own interpreter and summarizes the results.

A suite passes when it exits 0 and prints [SUCCESS]; the [PASS]/[FAIL]
markers it prints are counted as checks.

Usage:
    python run_all_tests.py              # every suite
    python run_all_tests.py --quick      # skip the slow end-to-end suites
    python run_all_tests.py --report     # also write test_report.md
    python run_all_tests.py --verbose    # print the output of failing suites
"""

import argparse
import subprocess
import sys
import time
from datetime import datetime
from pathlib import Path

ROOT = Path(__file__).parent


class Colors:
    HEADER = '\033[95m'
    OKBLUE = '\033[94m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


# Ordered bottom-up: every suite only depends on the layers above it
ALL_SUITES = [
    {'name': 'Data model and ingestion', 'file': 'test_data_model.py', 'layer': 'data', 'critical': True, 'fast': True},
    {'name': 'SPIKE-distance synchronicity', 'file': 'test_spike_sync.py', 'layer': 'metrics', 'critical': True, 'fast': True},
    {'name': 'Rhythm spectra and disruption', 'file': 'test_rhythm.py', 'layer': 'metrics', 'critical': True, 'fast': True},
    {'name': 'Population volume', 'file': 'test_volume.py', 'layer': 'metrics', 'critical': True, 'fast': True},
    {'name': 'Random-day null models', 'file': 'test_null_model.py', 'layer': 'statistics', 'critical': True, 'fast': False},
    {'name': 'Cohort simulator and config files', 'file': 'test_simulator.py', 'layer': 'statistics', 'critical': True, 'fast': False},
    {'name': 'Signatures and day clustering', 'file': 'test_signatures.py', 'layer': 'analysis', 'critical': False, 'fast': False},
    {'name': 'Command line', 'file': 'test_cli.py', 'layer': 'analysis', 'critical': False, 'fast': False},
]


def banner(text):
    line = f"{Colors.BOLD}{Colors.HEADER}{'=' * 80}{Colors.ENDC}"
    print(f"\n{line}\n{Colors.BOLD}{Colors.HEADER}{text.center(80)}{Colors.ENDC}\n{line}\n")


def run_suite(suite, timeout=900):
    """Returns (passed, duration, output)."""
    started = time.time()
    try:
        proc = subprocess.run([sys.executable, str(ROOT / suite['file'])], capture_output=True, text=True,
                              timeout=timeout, cwd=ROOT)
    except subprocess.TimeoutExpired:
        return False, time.time() - started, f"Suite timed out after {timeout}s"
    output = proc.stdout + proc.stderr
    return proc.returncode == 0 and "[SUCCESS]" in output, time.time() - started, output


def count_markers(output):
    return {'passed': output.count('[PASS]'), 'failed': output.count('[FAIL]'),
            'warnings': output.count('[WARNING]')}


def write_report(results, path, total_duration):
    failed = [r for r in results if not r['passed']]
    with open(path, 'w', encoding='utf-8') as f:
        f.write("# Biorhythm metrics - test report\n\n")
        f.write(f"**Generated:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n\n")
        f.write(f"- **Suites:** {len(results) - len(failed)}/{len(results)} passed\n")
        f.write(f"- **Checks:** {sum(r['stats']['passed'] for r in results)} passed, "
                f"{sum(r['stats']['failed'] for r in results)} failed\n")
        f.write(f"- **Total time:** {total_duration:.2f}s\n")
        f.write(f"- **Status:** {'✅ PASS' if not failed else '❌ FAIL'}\n\n")
        f.write("| Suite | Layer | Status | Duration | Checks |\n")
        f.write("|-------|-------|--------|----------|--------|\n")
        for r in results:
            status = "✅ PASS" if r['passed'] else "❌ FAIL"
            checks = f"{r['stats']['passed']}/{r['stats']['passed'] + r['stats']['failed']}"
            f.write(f"| {r['name']} | {r['layer']} | {status} | {r['duration']:.2f}s | {checks} |\n")
        for r in failed:
            f.write(f"\n## ❌ {r['name']} (`{r['file']}`)\n\n```\n{r['output'][-1500:]}\n```\n")


def main():
    parser = argparse.ArgumentParser(description='Run the biorhythm metrics test suites')
    parser.add_argument('--quick', action='store_true', help='Run only fast suites')
    parser.add_argument('--report', action='store_true', help='Write test_report.md')
    parser.add_argument('--verbose', action='store_true', help='Show output of failing suites')
    args = parser.parse_args()

    banner("BIORHYTHM METRICS - TEST SUITES")
    print(f"Started: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}  Python {sys.version.split()[0]}")

    suites = [s for s in ALL_SUITES if s['fast']] if args.quick else ALL_SUITES
    if args.quick:
        print(f"{Colors.WARNING}[QUICK MODE] {len(suites)}/{len(ALL_SUITES)} suites{Colors.ENDC}")
    print()

    results = []
    for suite in suites:
        if not (ROOT / suite['file']).exists():
            passed, duration, output = False, 0.0, f"File not found: {suite['file']}"
        else:
            print(f"{Colors.BOLD}{Colors.OKBLUE}[RUNNING]{Colors.ENDC} {suite['name']}...")
            passed, duration, output = run_suite(suite)
        stats = count_markers(output)
        status = f"{Colors.OKGREEN}[PASS]{Colors.ENDC}" if passed else f"{Colors.FAIL}[FAIL]{Colors.ENDC}"
        print(f"{status} {suite['name']} ({duration:.2f}s)")
        print(f"       {stats['passed']} passed, {stats['failed']} failed")
        if args.verbose and not passed:
            print(f"\n{Colors.WARNING}--- output ---{Colors.ENDC}\n{output[-3000:]}\n"
                  f"{Colors.WARNING}--- end ---{Colors.ENDC}\n")
        results.append({**suite, 'passed': passed, 'duration': duration, 'stats': stats, 'output': output})

    banner("SUMMARY")
    total_duration = sum(r['duration'] for r in results)
    failed = [r for r in results if not r['passed']]
    print(f"Suites: {len(results) - len(failed)}/{len(results)} passed")
    print(f"Checks: {sum(r['stats']['passed'] for r in results)} passed, "
          f"{sum(r['stats']['failed'] for r in results)} failed")
    print(f"Time:   {total_duration:.2f}s\n")
    for r in failed:
        marker = f"{Colors.BOLD}CRITICAL{Colors.ENDC} " if r['critical'] else ""
        print(f"  {Colors.FAIL}[X]{Colors.ENDC} {marker}{r['name']} ({r['file']})")

    if args.report:
        path = ROOT / "test_report.md"
        write_report(results, path, total_duration)
        print(f"\nReport saved to: {path}")

    sys.exit(0 if not failed else 1)


if __name__ == "__main__":
    main()

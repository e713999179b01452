"""
analysis_builder.py
-------------------

Runs the full metric pipeline over an activity CSV and writes the report
bundle: volume series, population spectra, OOS reports with pair distances,
rhythm disruption reports with shift distributions, null summaries, the
signature table, day points with their clusters, and a manifest listing every
artifact with its SHA-256, the config hash and the seed.

Outputs are deterministic: no timestamps, sorted JSON keys, seeded sampling.

Classes:
- RunConfig       : resolved run parameters (from a key-value file plus overrides)
- AnalysisOutputs : paths, hashes and recorded errors of one run
- AnalysisBuilder : orchestrator with build() (analyze) and build_nulls() (nullmodel)

Example:
    >>> cfg = RunConfig.from_file("run.cfg").with_overrides(seed=3)
    >>> out = AnalysisBuilder(cfg).build()
    >>> print(out.summary)
"""

from __future__ import annotations
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from activity_types import Activity, Cohort, EventSpec
from cohort_loader import ColumnSchema, filter_by_coverage, parse_activity_csv
from error_handling import (
    setup_logging, MetricConfig, BiorhythmError, ConfigError, ErrorContext, handle_metric_error,
    require, validate_fraction, validate_positive_int,
)
from keyvalue_config import EVENT_KEYS, ConfigBlock, event_from_block, read_config_file
from null_model import NullSummary, null_rhythm_disruption
from rhythm import RhythmConfig, population_psd, write_psd_csv, write_shift_csv
from signatures import (
    SIGNATURE_ACTIVITIES, SignatureAnalysis, SignatureConfig, cluster_summary, day_feature_points,
    dbscan, write_day_points_csv, write_signature_csv,
)
from spike_sync import SpikeDistanceConfig
from volume import write_volume_csv

logger = setup_logging("analysis_builder")

RUN_KEYS = (
    "input", "out", "seed", "pair_budget", "null_days", "alpha_days",
    "rhythm_window_days", "segment_days", "overlap_fraction", "max_gap_days", "bin_width_days",
    "smoothing_mass", "spike_variant", "grid_points_per_mean_isi", "edge_handling",
    "activities", "dbscan_eps", "dbscan_min_pts", "coverage_activity", "coverage_min_fraction",
    "exclude_event_windows", "attribute_columns", "attribute_filter",
)

MANIFEST_NAME = "manifest.json"


# -----------------------------
# Run configuration
# -----------------------------
@dataclass(frozen=True)
class RunConfig:
    input_path: Optional[str] = None
    output_dir: str = "report"
    events: Tuple[EventSpec, ...] = ()
    seed: int = 0
    pair_budget: Optional[int] = None
    null_days: int = MetricConfig.DEFAULT_NULL_DAYS
    alpha_days: int = MetricConfig.DEFAULT_ALPHA_DAYS
    spike: SpikeDistanceConfig = field(default_factory=SpikeDistanceConfig)
    rhythm: RhythmConfig = field(default_factory=RhythmConfig)
    activities: Tuple[Activity, ...] = SIGNATURE_ACTIVITIES
    dbscan_eps: float = MetricConfig.DEFAULT_DBSCAN_EPS
    dbscan_min_pts: int = MetricConfig.DEFAULT_DBSCAN_MIN_PTS
    coverage_activity: Optional[Activity] = Activity.HEART_RATE
    coverage_min_fraction: float = MetricConfig.DEFAULT_COVERAGE_FRACTION
    exclude_event_windows: bool = False
    attribute_columns: Tuple[str, ...] = ()
    attribute_filter: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        require(validate_positive_int(self.null_days, "null_days"))
        require(validate_positive_int(self.alpha_days, "alpha_days"))
        require(validate_positive_int(self.dbscan_min_pts, "dbscan_min_pts"))
        if self.pair_budget is not None:
            require(validate_positive_int(self.pair_budget, "pair_budget"))
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if not self.dbscan_eps > 0:
            raise ConfigError(f"dbscan_eps must be > 0, got {self.dbscan_eps}")
        require(validate_fraction(self.coverage_min_fraction, "coverage_min_fraction"))
        if not self.activities:
            raise ConfigError("at least one activity must be analyzed")
        for activity in self.activities:
            if activity not in SIGNATURE_ACTIVITIES:
                raise ConfigError(f"activity '{activity.value}' has no volume/rhythm metrics; "
                                  f"choose from {[a.value for a in SIGNATURE_ACTIVITIES]}")
        slugs = [e.slug() for e in self.events]
        if len(set(slugs)) != len(slugs):
            raise ConfigError(f"event names must be distinct after slugging: {slugs}")
        for column, _ in self.attribute_filter:
            if column not in self.attribute_columns:
                raise ConfigError(f"attribute_filter uses '{column}', which is not in attribute_columns")

    # -------------------------
    # Loading
    # -------------------------
    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Read [run] (once) and [event] (repeated) blocks; paths resolve against the file's folder."""
        path = Path(path)
        blocks = read_config_file(path, {"run": RUN_KEYS, "event": EVENT_KEYS}, repeatable=("event",))
        runs = [b for b in blocks if b.section == "run"]
        run = runs[0] if runs else ConfigBlock("run", 0, source=str(path))
        base = path.parent
        return cls.from_block(run, [b for b in blocks if b.section == "event"], base)

    @classmethod
    def from_block(cls, run: ConfigBlock, event_blocks: Sequence[ConfigBlock] = (),
                   base: Optional[Path] = None) -> "RunConfig":
        def resolve(value: Optional[str]) -> Optional[str]:
            if value is None or base is None or Path(value).is_absolute():
                return value
            return str(base / value)

        defaults = cls()
        alpha = run.get_int("alpha_days", defaults.alpha_days)
        rhythm = RhythmConfig(
            window_days=run.get_int("rhythm_window_days", MetricConfig.DEFAULT_RHYTHM_WINDOW_DAYS),
            segment_days=run.get_int("segment_days", MetricConfig.DEFAULT_SEGMENT_DAYS),
            overlap_fraction=run.get_float("overlap_fraction", MetricConfig.DEFAULT_OVERLAP_FRACTION),
            max_gap_days=run.get_int("max_gap_days", MetricConfig.MAX_GAP_DAYS),
            bin_width_days=run.get_float("bin_width_days", None),
            smoothing_mass=run.get_float("smoothing_mass", MetricConfig.DEFAULT_SMOOTHING_MASS),
        )
        spike = SpikeDistanceConfig(
            variant=run.get_str("spike_variant", "standard"),
            grid_points_per_mean_isi=run.get_int("grid_points_per_mean_isi",
                                                 MetricConfig.DEFAULT_GRID_POINTS_PER_MEAN_ISI),
            edge_handling=run.get_str("edge_handling", "auxiliary"),
        )
        activities = tuple(Activity.parse(a) for a in run.get_list("activities", [a.value for a in defaults.activities]))
        coverage = run.get_str("coverage_activity", defaults.coverage_activity.value)
        coverage_activity = None if coverage.lower() in ("", "none") else Activity.parse(coverage)
        attribute_filter = []
        for item in run.get_list("attribute_filter", []):
            if "=" not in item:
                raise ConfigError(f"{run.where('attribute_filter')}: expected column=value, got '{item}'")
            column, value = item.split("=", 1)
            attribute_filter.append((column.strip(), value.strip()))
        return cls(
            input_path=resolve(run.get_str("input")),
            output_dir=resolve(run.get_str("out", defaults.output_dir)),
            events=tuple(event_from_block(b, alpha) for b in event_blocks),
            seed=run.get_int("seed", defaults.seed),
            pair_budget=run.get_int("pair_budget", None),
            null_days=run.get_int("null_days", defaults.null_days),
            alpha_days=alpha,
            spike=spike,
            rhythm=rhythm,
            activities=activities,
            dbscan_eps=run.get_float("dbscan_eps", defaults.dbscan_eps),
            dbscan_min_pts=run.get_int("dbscan_min_pts", defaults.dbscan_min_pts),
            coverage_activity=coverage_activity,
            coverage_min_fraction=run.get_float("coverage_min_fraction", defaults.coverage_min_fraction),
            exclude_event_windows=run.get_bool("exclude_event_windows", defaults.exclude_event_windows),
            attribute_columns=tuple(run.get_list("attribute_columns", [])),
            attribute_filter=tuple(attribute_filter),
        )

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       pair_budget: Optional[int] = None, alpha_days: Optional[int] = None,
                       rhythm_window_days: Optional[int] = None, spike_variant: Optional[str] = None,
                       null_days: Optional[int] = None) -> "RunConfig":
        """Command-line values replace file values; None leaves a value unchanged."""
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        if pair_budget is not None:
            changes["pair_budget"] = pair_budget
        if null_days is not None:
            changes["null_days"] = null_days
        if alpha_days is not None:
            changes["alpha_days"] = alpha_days
            changes["events"] = tuple(replace(e, alpha_days=alpha_days) for e in self.events)
        if rhythm_window_days is not None:
            changes["rhythm"] = replace(self.rhythm, window_days=rhythm_window_days)
        if spike_variant is not None:
            changes["spike"] = replace(self.spike, variant=spike_variant)
        return replace(self, **changes) if changes else self

    # -------------------------
    # Derived views
    # -------------------------
    def signature_config(self) -> SignatureConfig:
        return SignatureConfig(
            spike=self.spike, rhythm=self.rhythm, pair_budget=self.pair_budget,
            null_days=self.null_days, seed=self.seed, alpha_days=self.alpha_days,
            exclude_event_windows=self.exclude_event_windows, dbscan_eps=self.dbscan_eps,
            dbscan_min_pts=self.dbscan_min_pts, activities=self.activities,
        )

    def to_dict(self) -> Dict:
        """Canonical, JSON-ready view (the config hash is computed from it)."""
        return {
            "input": self.input_path,
            "events": [{"name": e.name, "date": e.event_date.isoformat(), "alpha_days": e.alpha_days}
                       for e in self.events],
            "seed": self.seed,
            "pair_budget": self.pair_budget,
            "null_days": self.null_days,
            "alpha_days": self.alpha_days,
            "spike": {"variant": self.spike.variant,
                      "grid_points_per_mean_isi": self.spike.grid_points_per_mean_isi,
                      "edge_handling": self.spike.edge_handling},
            "rhythm": {"window_days": self.rhythm.window_days,
                       "segment_days": self.rhythm.segment_days,
                       "overlap_fraction": self.rhythm.overlap_fraction,
                       "max_gap_days": self.rhythm.max_gap_days,
                       "bin_width_days": self.rhythm.bin_width,
                       "smoothing_mass": self.rhythm.smoothing_mass},
            "activities": [a.value for a in self.activities],
            "dbscan": {"eps": self.dbscan_eps, "min_pts": self.dbscan_min_pts},
            "coverage": {"activity": self.coverage_activity.value if self.coverage_activity else None,
                         "min_fraction": self.coverage_min_fraction},
            "exclude_event_windows": self.exclude_event_windows,
            "attribute_columns": list(self.attribute_columns),
            "attribute_filter": {k: v for k, v in self.attribute_filter},
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# -----------------------------
# File helpers
# -----------------------------
def sha256_file(p: Path) -> str:
    h = hashlib.sha256()
    with p.open("rb") as f:
        for chunk in iter(lambda: f.read(1024 * 1024), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, date):
        return obj.isoformat()
    return obj


def write_json(p: Path, obj: Mapping) -> Path:
    p.write_text(json.dumps(_json_ready(obj), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
                 encoding="utf-8")
    return p


@dataclass
class AnalysisOutputs:
    out_dir: Path
    artifacts: Dict[str, str] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)
    manifest_path: Optional[Path] = None
    n_users: int = 0

    @property
    def failed(self) -> bool:
        return bool(self.errors)

    @property
    def summary(self) -> str:
        status = f"{len(self.errors)} metric failure(s)" if self.errors else "all metrics computed"
        return (f"{len(self.artifacts)} artifact(s) in {self.out_dir} for {self.n_users} user(s); {status}")


# -----------------------------
# Orchestrator
# -----------------------------
class AnalysisBuilder:
    """
    Loads the cohort once, runs every metric through SignatureAnalysis and
    writes each artifact as it becomes available.
    """

    def __init__(self, cfg: RunConfig, cohort: Optional[Cohort] = None):
        self.cfg = cfg
        self._cohort = cohort
        self._errors: List[str] = []
        self.out = AnalysisOutputs(out_dir=Path(cfg.output_dir))

    # -------------------------
    # Inputs
    # -------------------------
    def load_cohort(self) -> Cohort:
        if self._cohort is not None:
            return self._cohort
        if not self.cfg.input_path:
            raise ConfigError("no input file configured ([run] input)")
        schema = ColumnSchema(attribute_columns=self.cfg.attribute_columns)
        cohort = parse_activity_csv(self.cfg.input_path, schema=schema,
                                    attribute_filter=dict(self.cfg.attribute_filter) or None)
        if cohort.rejected_rows:
            print(f"⚠️  Rejected {len(cohort.rejected_rows)} row(s) at ingestion")
        if self.cfg.coverage_activity is not None:
            before = cohort.n_users
            cohort = filter_by_coverage(cohort, self.cfg.coverage_activity, self.cfg.coverage_min_fraction)
            print(f"🧹  Coverage filter ({self.cfg.coverage_activity.value} >= "
                  f"{self.cfg.coverage_min_fraction:.0%}): kept {cohort.n_users} of {before} users")
        self._cohort = cohort
        return cohort

    # -------------------------
    # Writers
    # -------------------------
    def _path(self, name: str) -> Path:
        return self.out.out_dir / name

    def _record(self, path: Path) -> None:
        self.out.artifacts[path.name] = sha256_file(path)

    def _write_json(self, name: str, obj: Mapping) -> None:
        self._record(write_json(self._path(name), obj))

    def _attempt(self, context: ErrorContext, fn):
        try:
            return fn()
        except BiorhythmError as e:
            self._errors.append(handle_metric_error(context, e, logger))
            return None

    def _null_report(self, name: str, summary: Optional[NullSummary]) -> None:
        if summary is not None:
            self._write_json(name, summary.report())

    def _finish(self, analysis: SignatureAnalysis) -> AnalysisOutputs:
        self.out.errors = list(analysis.errors) + self._errors
        manifest = {
            "artifacts": {name: {"sha256": digest} for name, digest in sorted(self.out.artifacts.items())},
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.seed,
            "n_users": self.out.n_users,
            "errors": self.out.errors,
        }
        self.out.manifest_path = write_json(self._path(MANIFEST_NAME), manifest)
        return self.out

    def _prepare_out_dir(self) -> None:
        """
        Create the output directory, or clear the bundle an earlier run left in it.

        Raises:
            ConfigError: the directory holds files that no earlier manifest lists
        """
        out_dir = self.out.out_dir
        if not out_dir.exists():
            out_dir.mkdir(parents=True)
            return
        if not out_dir.is_dir():
            raise ConfigError(f"output path {out_dir} is not a directory")
        previous = set()
        manifest = out_dir / MANIFEST_NAME
        if manifest.is_file():
            try:
                listed = json.loads(manifest.read_text(encoding="utf-8")).get("artifacts", {})
            except (ValueError, AttributeError) as e:
                raise ConfigError(f"{manifest} is not a readable manifest: {e}") from e
            previous = {name for name in listed if Path(name).name == name} | {MANIFEST_NAME}
        foreign = sorted(p.name for p in out_dir.iterdir() if p.name not in previous or not p.is_file())
        if foreign:
            raise ConfigError(f"output directory {out_dir} holds files outside an earlier bundle: "
                              f"{', '.join(foreign[:5])}")
        for name in sorted(previous):
            (out_dir / name).unlink(missing_ok=True)
        if previous:
            logger.info(f"Replaced the earlier bundle in {out_dir} ({len(previous)} file(s))")

    def _start(self, title: str) -> Tuple[Cohort, SignatureAnalysis]:
        print(f"\n🏗️  {title}: {len(self.cfg.events)} event(s), seed={self.cfg.seed}")
        cohort = self.load_cohort()
        self.out.n_users = cohort.n_users
        self._prepare_out_dir()
        print(f"   Users={cohort.n_users:,}, Days={cohort.n_days:,} "
              f"({cohort.start_date}..{cohort.end_date})")
        return cohort, SignatureAnalysis(cohort, self.cfg.events, self.cfg.signature_config())

    def _write_nulls(self, cohort: Cohort, analysis: SignatureAnalysis) -> None:
        self._null_report("null_oos.json", analysis.null_oos)
        self._null_report("null_oos_growth.json", analysis.null_growth)
        for activity in self.cfg.activities:
            self._null_report(f"null_volume_{activity.value}.json", analysis.null_volumes.get(activity))
            dist = analysis.null_dists.get(activity)
            if dist is None:
                continue
            summary = self._attempt(
                ErrorContext("null rhythm disruption", activity=activity.value),
                lambda: null_rhythm_disruption(cohort, activity, dist, self.cfg.null_days, self.cfg.seed,
                                               self.cfg.rhythm, analysis.exclusions(),
                                               analysis.table_for(activity)))
            self._null_report(f"null_rhythm_disruption_{activity.value}.json", summary)

    def _write_event(self, event: EventSpec, analysis: SignatureAnalysis) -> None:
        slug = event.slug()
        sync = analysis.sync.get(event.name)
        if sync is not None:
            self._write_json(f"oos_{slug}.json", sync.report())
            self._record(sync.before.write_csv(self._path(f"pairs_{slug}_before.csv")))
            self._record(sync.after.write_csv(self._path(f"pairs_{slug}_after.csv")))
        for activity, result in sorted(analysis.disruptions.get(event.name, {}).items(),
                                       key=lambda kv: kv[0].value):
            self._write_json(f"disruption_{slug}_{activity.value}.json", result.report())
            self._record(write_shift_csv(result.event_dist, result.null_dist,
                                         self._path(f"shift_{slug}_{activity.value}.csv")))

    def _write_clusters(self, cohort: Cohort, analysis: SignatureAnalysis, activity: Activity) -> None:
        cfg = self.cfg
        dist = analysis.null_dists.get(activity)
        if dist is None:
            return
        features = self._attempt(
            ErrorContext("day features", activity=activity.value),
            lambda: day_feature_points(cohort, activity, analysis.cfg, analysis.table_for(activity),
                                       dist, analysis.series_for(activity)))
        if features is None or len(features) == 0:
            return
        labeled = dbscan(features.points, cfg.dbscan_eps, cfg.dbscan_min_pts)
        self._record(write_day_points_csv(labeled, self._path(f"day_points_{activity.value}.csv")))
        summary = cluster_summary(labeled)
        summary.update({"activity": activity.value, "excluded_days": features.excluded_days,
                        "eps": cfg.dbscan_eps, "min_pts": cfg.dbscan_min_pts})
        self._write_json(f"clusters_{activity.value}.json", summary)

    # -------------------------
    # Commands
    # -------------------------
    def build(self) -> AnalysisOutputs:
        """Full analysis bundle."""
        cfg = self.cfg
        cohort, analysis = self._start("Analyzing cohort")

        print("🎲  Running null models and event metrics...")
        analysis.run()

        print("📈  Writing volume series and population spectra...")
        for activity in cfg.activities:
            series = self._attempt(ErrorContext("population volume", activity=activity.value),
                                   lambda: analysis.series_for(activity))
            if series is not None:
                self._record(write_volume_csv(series, self._path(f"volume_{activity.value}.csv")))
            psd = self._attempt(ErrorContext("population PSD", activity=activity.value),
                                lambda: population_psd(cohort, activity, cfg.rhythm))
            if psd is not None:
                self._record(write_psd_csv(psd, self._path(f"psd_{activity.value}.csv")))
        if analysis.threshold_source is not None:
            self._record(analysis.threshold_source.write_csv(self._path("pairs_full_year.csv")))

        for event in cfg.events:
            print(f"🎯  Writing event {event.name} ({event.event_date})")
            self._write_event(event, analysis)

        self._write_nulls(cohort, analysis)
        self._record(write_signature_csv(analysis.rows, self._path("signatures.csv")))

        print("🧭  Clustering days...")
        for activity in cfg.activities:
            self._write_clusters(cohort, analysis, activity)

        out = self._finish(analysis)
        print(f"✅ Analysis complete: {out.summary}\n")
        return out

    def build_nulls(self) -> AnalysisOutputs:
        """Null summaries only."""
        cohort, analysis = self._start("Null models")
        print("🎲  Running null models...")
        analysis.run_nulls()
        self._write_nulls(cohort, analysis)
        out = self._finish(analysis)
        print(f"✅ Null models complete: {out.summary}\n")
        return out

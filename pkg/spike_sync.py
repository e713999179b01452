"""
spike_sync.py
-------------

Synchronicity of nightly sleep onsets across a population.

Treats each user's sleep onsets as a spike train and measures pairwise
dissimilarity with the SPIKE-distance (time-average of an instantaneous spike
function S(t)). Averaging over user pairs gives the population distance; the
change of that average across an event is the Out-Of-Sync score (OOS), and
the relative change in the share of heavily out-of-sync pairs is the OOS
population growth.

Classes:
- SpikeDistanceConfig: Variant, grid density and edge handling
- PairDistanceMatrix: Per-pair distances over one window
- EventSyncResult: Before/after matrices and scores for one event

Functions:
- spike_function_at, spike_profile: S(t) at one or many times
- bivariate_spike_distance: D_S of two trains over a window
- multivariate_spike_distance: mean D_S over all (or sampled) pairs
- full_year_pair_distances: pair distances over the whole interval
- evaluate_event_sync, oos_score, oos_outlier_fraction, oos_population_growth
"""

from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from activity_types import Cohort, EventSpec, SpikeTrain
from cohort_loader import filter_complete_trains, spike_trains
from error_handling import (
    setup_logging, MetricConfig, ConfigError, DomainError, InsufficientDataError,
    UndefinedGrowthError,
)

logger = setup_logging("spike_sync")

PAPER = "paper"
STANDARD = "standard"
AUXILIARY = "auxiliary"
CLIP = "clip"

_VARIANT_ALIASES = {
    "paper": PAPER, "paper-verbatim": PAPER, "paper_verbatim": PAPER, "mean_isi": PAPER, "mean-isi": PAPER,
    "standard": STANDARD, "standard-normalized": STANDARD, "standard_normalized": STANDARD,
}
_EDGE_ALIASES = {
    "auxiliary": AUXILIARY, "auxiliary-endpoint-spikes": AUXILIARY, "aux": AUXILIARY,
    "clip": CLIP,
}

Window = Tuple[float, float]


@dataclass(frozen=True)
class SpikeDistanceConfig:
    """
    How S(t) is evaluated and integrated.

    variant:
        "paper"    - S(t) = (|dt_P| <x_F> + |dt_F| <x_P>) / <ISI>, <ISI> the mean of
                     the two trains' mean inter-spike intervals (unbounded, in days)
        "standard" - normalized SPIKE-distance, values in [0, 1]
    grid_points_per_mean_isi:
        integration sub-grid density (points per mean inter-spike interval)
    edge_handling:
        "auxiliary" - add spikes at both window edges to both trains
        "clip"      - integrate only where both trains have spikes on both sides
    """
    variant: str = STANDARD
    grid_points_per_mean_isi: int = MetricConfig.DEFAULT_GRID_POINTS_PER_MEAN_ISI
    edge_handling: str = AUXILIARY

    def __post_init__(self):
        variant = _VARIANT_ALIASES.get(str(self.variant).lower())
        if variant is None:
            raise ConfigError(f"Unknown spike variant '{self.variant}'. Choose 'paper' or 'standard'")
        edge = _EDGE_ALIASES.get(str(self.edge_handling).lower())
        if edge is None:
            raise ConfigError(f"Unknown edge handling '{self.edge_handling}'. Choose 'auxiliary' or 'clip'")
        density = self.grid_points_per_mean_isi
        if isinstance(density, bool) or int(density) != density or density < MetricConfig.MIN_GRID_POINTS_PER_MEAN_ISI:
            raise ConfigError(f"grid_points_per_mean_isi must be an integer >= "
                              f"{MetricConfig.MIN_GRID_POINTS_PER_MEAN_ISI}, got {density}")
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "edge_handling", edge)
        object.__setattr__(self, "grid_points_per_mean_isi", int(density))


@dataclass
class PairDistanceMatrix:
    """Distances D_S for user pairs (user_a < user_b) over one window."""
    pairs: Dict[Tuple[str, str], float]
    window: Window

    def __post_init__(self):
        for (a, b), value in self.pairs.items():
            if not a < b:
                raise DomainError(f"pair keys must be ordered (a < b), got ({a}, {b})")
            if not value >= 0:
                raise DomainError(f"pair distance must be >= 0, got {value} for ({a}, {b})")

    def __len__(self) -> int:
        return len(self.pairs)

    def keys(self) -> List[Tuple[str, str]]:
        return sorted(self.pairs)

    def values(self) -> np.ndarray:
        return np.array([self.pairs[k] for k in self.keys()], dtype=float)

    def mean(self) -> float:
        if not self.pairs:
            raise InsufficientDataError("no pairs to average")
        return float(np.mean(self.values()))

    def to_frame(self) -> pd.DataFrame:
        keys = self.keys()
        return pd.DataFrame({
            "user_a": [a for a, _ in keys],
            "user_b": [b for _, b in keys],
            "d_s": [self.pairs[k] for k in keys],
        })

    def write_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path


# -------------------------
# Spike function
# -------------------------
def _edge_handled(train: SpikeTrain, window: Window, cfg: SpikeDistanceConfig) -> np.ndarray:
    t1, t2 = window
    inside = train.within(t1, t2)
    if cfg.edge_handling == AUXILIARY:
        if inside.size == 0:
            raise InsufficientDataError(f"no spikes inside window [{t1:g}, {t2:g}]", user_id=train.user_id)
        return np.unique(np.concatenate(([t1], inside, [t2])))
    if inside.size < 2:
        raise InsufficientDataError(f"{inside.size} spike(s) inside window [{t1:g}, {t2:g}], need 2",
                                    user_id=train.user_id)
    return inside


def _prepare(s1: SpikeTrain, s2: SpikeTrain, window: Window, cfg: SpikeDistanceConfig):
    t1, t2 = float(window[0]), float(window[1])
    if not (np.isfinite(t1) and np.isfinite(t2)) or t2 <= t1:
        raise DomainError(f"degenerate window [{t1}, {t2}]")
    a = _edge_handled(s1, (t1, t2), cfg)
    b = _edge_handled(s2, (t1, t2), cfg)
    if cfg.edge_handling == AUXILIARY:
        lo, hi = t1, t2
    else:
        lo, hi = max(a[0], b[0]), min(a[-1], b[-1])
        if hi <= lo:
            raise DomainError(f"trains do not overlap inside [{t1:g}, {t2:g}] after clipping")
    mean_isi = 0.5 * ((a[-1] - a[0]) / (a.size - 1) + (b[-1] - b[0]) / (b.size - 1))
    return a, b, lo, hi, mean_isi


def _nearest_distance(values: np.ndarray, spikes: np.ndarray) -> np.ndarray:
    """Distance from each value to the closest spike."""
    j = np.searchsorted(spikes, values)
    left = spikes[np.clip(j - 1, 0, spikes.size - 1)]
    right = spikes[np.clip(j, 0, spikes.size - 1)]
    return np.minimum(np.abs(values - left), np.abs(values - right))


def _evaluate(t: np.ndarray, ia: np.ndarray, ib: np.ndarray, a: np.ndarray, b: np.ndarray,
              near_a: np.ndarray, near_b: np.ndarray, mean_isi: float, variant: str) -> np.ndarray:
    # ia/ib index the following spike: a[ia - 1] <= t <= a[ia]
    pa, fa = a[ia - 1], a[ia]
    pb, fb = b[ib - 1], b[ib]
    xpa, xfa = t - pa, fa - t
    xpb, xfb = t - pb, fb - t
    if variant == PAPER:
        dp = np.abs(pa - pb)
        df = np.abs(fa - fb)
        return (dp * (0.5 * (xfa + xfb)) + df * (0.5 * (xpa + xpb))) / mean_isi
    isi_a = fa - pa
    isi_b = fb - pb
    sa = (near_a[ia - 1] * xfa + near_a[ia] * xpa) / isi_a
    sb = (near_b[ib - 1] * xfb + near_b[ib] * xpb) / isi_b
    return (sa * isi_b + sb * isi_a) / (0.5 * (isi_a + isi_b) ** 2)


def spike_profile(s1: SpikeTrain, s2: SpikeTrain, times, window: Window,
                  cfg: Optional[SpikeDistanceConfig] = None) -> np.ndarray:
    """
    S(t) at the given times (right-continuous at spike times).

    Raises:
        InsufficientDataError: a train has too few spikes in the window
        DomainError: a time outside the (edge-handled) window
    """
    cfg = cfg or SpikeDistanceConfig()
    a, b, lo, hi, mean_isi = _prepare(s1, s2, window, cfg)
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < lo) or np.any(t > hi):
        raise DomainError(f"times must lie within [{lo:g}, {hi:g}]")
    ia = np.clip(np.searchsorted(a, t, side="right"), 1, a.size - 1)
    ib = np.clip(np.searchsorted(b, t, side="right"), 1, b.size - 1)
    return _evaluate(t, ia, ib, a, b, _nearest_distance(a, b), _nearest_distance(b, a), mean_isi, cfg.variant)


def spike_function_at(t: float, s1: SpikeTrain, s2: SpikeTrain, cfg: Optional[SpikeDistanceConfig] = None,
                      window: Optional[Window] = None) -> float:
    """
    S(t) for two trains at one time.

    The window defaults to the span of both trains' intervals.
    """
    if window is None:
        window = (min(s1.interval[0], s2.interval[0]), max(s1.interval[1], s2.interval[1]))
    return float(spike_profile(s1, s2, [t], window, cfg)[0])


# -------------------------
# Bivariate distance
# -------------------------
def _integration_grid(a: np.ndarray, b: np.ndarray, lo: float, hi: float, spacing: float):
    """
    Piecewise-uniform grid: every spike of either train is a breakpoint, and each
    piece gets its own uniform sub-grid. Breakpoints appear twice (end of one
    piece, start of the next) so each piece is evaluated with its own spikes.
    """
    bp = np.union1d(np.union1d(a, b), [lo, hi])
    bp = bp[(bp >= lo) & (bp <= hi)]
    starts, ends = bp[:-1], bp[1:]
    lengths = ends - starts
    steps = np.maximum(1, np.ceil(lengths / spacing).astype(int))
    counts = steps + 1
    piece = np.repeat(np.arange(starts.size), counts)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    k = np.arange(piece.size) - offsets[piece]
    frac = k / steps[piece]
    t = np.where(k == steps[piece], ends[piece], starts[piece] + frac * lengths[piece])
    mids = 0.5 * (starts + ends)
    return t, piece, mids


def bivariate_spike_distance(s1: SpikeTrain, s2: SpikeTrain, window: Window,
                             cfg: Optional[SpikeDistanceConfig] = None) -> float:
    """
    D_S = (1 / (t2 - t1)) * integral of S(t) over the window (trapezoidal rule).

    Symmetric in its arguments, zero for identical trains, and in [0, 1] for
    the standard variant.
    """
    cfg = cfg or SpikeDistanceConfig()
    a, b, lo, hi, mean_isi = _prepare(s1, s2, window, cfg)
    t, piece, mids = _integration_grid(a, b, lo, hi, mean_isi / cfg.grid_points_per_mean_isi)
    ia = np.clip(np.searchsorted(a, mids, side="right"), 1, a.size - 1)[piece]
    ib = np.clip(np.searchsorted(b, mids, side="right"), 1, b.size - 1)[piece]
    values = _evaluate(t, ia, ib, a, b, _nearest_distance(a, b), _nearest_distance(b, a), mean_isi, cfg.variant)
    # Duplicate breakpoints have zero width, so pieces do not leak into each other
    distance = trapezoid(values, t) / (hi - lo)
    return max(float(distance), 0.0)


# -------------------------
# Multivariate distance
# -------------------------
def sample_pairs(n: int, pair_budget: Optional[int], seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Index pairs (i < j) over n items: all of them, or pair_budget drawn uniformly
    without replacement. Returned in lexicographic order.
    """
    total = n * (n - 1) // 2
    if pair_budget is not None and pair_budget < 1:
        raise ConfigError(f"pair_budget must be >= 1, got {pair_budget}")
    if pair_budget is None or pair_budget >= total:
        i, j = np.triu_indices(n, k=1)
        return i, j
    rng = np.random.default_rng(seed)
    ranks = np.sort(rng.choice(total, size=int(pair_budget), replace=False))
    # Row i holds pairs (i, i+1..n-1); row_start[i] is its first rank
    rows = np.arange(n)
    row_start = rows * (2 * n - rows - 1) // 2
    i = np.searchsorted(row_start, ranks, side="right") - 1
    j = ranks - row_start[i] + i + 1
    return i, j


def _as_mapping(trains: Union[Mapping[str, SpikeTrain], Sequence[SpikeTrain]]) -> Dict[str, SpikeTrain]:
    if isinstance(trains, Mapping):
        return {str(k): v for k, v in trains.items()}
    out = {}
    for idx, train in enumerate(trains):
        key = train.user_id if train.user_id is not None else f"train{idx:06d}"
        if key in out:
            key = f"{key}#{idx}"
        out[key] = train
    return out


def _usable(trains: Dict[str, SpikeTrain], window: Window, cfg: SpikeDistanceConfig) -> List[str]:
    keys = []
    for key in sorted(trains):
        try:
            _edge_handled(trains[key], window, cfg)
            keys.append(key)
        except InsufficientDataError as e:
            logger.info(f"Skipping train {key}: {e}")
    return keys


def pair_distances(trains: Mapping[str, SpikeTrain], keys: Sequence[str], i: np.ndarray, j: np.ndarray,
                   window: Window, cfg: SpikeDistanceConfig) -> PairDistanceMatrix:
    """Distances for the given index pairs into the sorted key list."""
    pairs = {}
    for ii, jj in zip(i.tolist(), j.tolist()):
        a, b = keys[ii], keys[jj]
        pairs[(a, b)] = bivariate_spike_distance(trains[a], trains[b], window, cfg)
    return PairDistanceMatrix(pairs=pairs, window=(float(window[0]), float(window[1])))


def multivariate_spike_distance(trains, window: Window, cfg: Optional[SpikeDistanceConfig] = None,
                                pair_budget: Optional[int] = None, seed: int = 0
                                ) -> Tuple[float, PairDistanceMatrix]:
    """
    Mean D_S over all pairs of usable trains, or over pair_budget sampled pairs.

    Args:
        trains: Mapping user_id -> SpikeTrain, or a sequence of trains
        window: (t1, t2) in days
        pair_budget: Sample this many pairs (seeded) instead of all n(n-1)/2

    Returns:
        (mean distance, PairDistanceMatrix)
    """
    cfg = cfg or SpikeDistanceConfig()
    trains = _as_mapping(trains)
    keys = _usable(trains, window, cfg)
    if len(keys) < 2:
        raise InsufficientDataError(f"{len(keys)} usable spike train(s) in window {window}, need 2")
    i, j = sample_pairs(len(keys), pair_budget, seed)
    matrix = pair_distances(trains, keys, i, j, window, cfg)
    return matrix.mean(), matrix


def full_year_pair_distances(cohort: Cohort, cfg: Optional[SpikeDistanceConfig] = None,
                             pair_budget: Optional[int] = None, seed: int = 0) -> PairDistanceMatrix:
    """Pair distances over the whole cohort interval (outlier threshold source)."""
    cfg = cfg or SpikeDistanceConfig()
    trains = spike_trains(cohort)
    window = (0.0, float(cohort.n_days))
    _, matrix = multivariate_spike_distance(trains, window, cfg, pair_budget, seed)
    return matrix


# -------------------------
# Event synchronicity
# -------------------------
def oos_outlier_fraction(pairs: PairDistanceMatrix, threshold_source: PairDistanceMatrix) -> float:
    """
    Share of pairs whose distance exceeds median + 2 sd of the threshold source.
    """
    reference = threshold_source.values()
    if reference.size == 0:
        raise DomainError("threshold source has no pair distances")
    values = pairs.values()
    if values.size == 0:
        raise DomainError("no pair distances to score")
    spread = float(np.std(reference, ddof=1)) if reference.size > 1 else 0.0
    threshold = float(np.median(reference)) + 2.0 * spread
    return float(np.mean(values > threshold))


def growth_ratio(before: float, after: float) -> float:
    """Relative change (after - before) / before of the outlier fraction."""
    if before <= 0:
        raise UndefinedGrowthError("before-window outlier fraction is 0; growth is undefined")
    return (after - before) / before


@dataclass
class EventSyncResult:
    """Synchronicity of one event: pair matrices, OOS and OOS growth."""
    event: EventSpec
    users: List[str]
    before: PairDistanceMatrix
    after: PairDistanceMatrix
    variant: str
    seed: int
    outliers_before: Optional[float] = None
    outliers_after: Optional[float] = None
    growth: Optional[float] = None
    growth_error: Optional[str] = None

    @property
    def oos(self) -> float:
        return self.after.mean() - self.before.mean()

    @property
    def n_pairs(self) -> int:
        return len(self.after)

    def report(self) -> Dict:
        return {
            "event": self.event.name,
            "oos": self.oos,
            "oos_growth": self.growth,
            "n_users": len(self.users),
            "n_pairs": self.n_pairs,
            "variant": self.variant,
            "seed": self.seed,
        }


def evaluate_event_sync(cohort: Cohort, event: EventSpec, cfg: Optional[SpikeDistanceConfig] = None,
                        pair_budget: Optional[int] = None, seed: int = 0,
                        threshold_source: Optional[PairDistanceMatrix] = None,
                        with_growth: bool = True) -> EventSyncResult:
    """
    Pair distances before ([t - alpha, t]) and after ([t, t + alpha]) an event
    over users with complete trains, using the same sampled pairs for both.

    A complete user whose post-midnight onsets leave a window without any
    spike is dropped before pairs are sampled.

    When with_growth is set, outlier fractions and OOS growth are computed
    against threshold_source (the full-interval pair distances by default).
    """
    cfg = cfg or SpikeDistanceConfig()
    t = float(event.day_index(cohort))
    alpha = float(event.alpha_days)
    before_window, after_window = (t - alpha, t), (t, t + alpha)
    trains = spike_trains(cohort, filter_complete_trains(cohort, event))
    users = sorted(set(_usable(trains, before_window, cfg)) & set(_usable(trains, after_window, cfg)))
    if len(users) < 2:
        raise InsufficientDataError(f"{len(users)} user(s) with complete trains around '{event.name}', need 2")
    i, j = sample_pairs(len(users), pair_budget, seed)
    before = pair_distances(trains, users, i, j, before_window, cfg)
    after = pair_distances(trains, users, i, j, after_window, cfg)
    result = EventSyncResult(event=event, users=users, before=before, after=after,
                             variant=cfg.variant, seed=seed)
    if with_growth:
        if threshold_source is None:
            threshold_source = full_year_pair_distances(cohort, cfg, pair_budget, seed)
        result.outliers_before = oos_outlier_fraction(before, threshold_source)
        result.outliers_after = oos_outlier_fraction(after, threshold_source)
        try:
            result.growth = growth_ratio(result.outliers_before, result.outliers_after)
        except UndefinedGrowthError as e:
            result.growth_error = str(e)
    return result


def oos_score(cohort: Cohort, event: EventSpec, cfg: Optional[SpikeDistanceConfig] = None,
              pair_budget: Optional[int] = None, seed: int = 0) -> float:
    """
    OOS = mean D_S after the event minus mean D_S before it.

    Positive means the population became less synchronized.
    """
    return evaluate_event_sync(cohort, event, cfg, pair_budget, seed, with_growth=False).oos


def oos_population_growth(cohort: Cohort, event: EventSpec, cfg: Optional[SpikeDistanceConfig] = None,
                          pair_budget: Optional[int] = None, seed: int = 0,
                          threshold_source: Optional[PairDistanceMatrix] = None) -> float:
    """
    (outliers_after - outliers_before) / outliers_before.

    Raises:
        UndefinedGrowthError: no before-window pair exceeds the threshold
    """
    result = evaluate_event_sync(cohort, event, cfg, pair_budget, seed, threshold_source)
    if result.growth is None:
        raise UndefinedGrowthError(result.growth_error or "growth is undefined")
    return result.growth

"""Scoring, cost modeling, aggregation, participant splitting, and sweeps.

Scoring classifies the primary prediction of every frame into IOU bands
and reports two F1 flavors: the default counts localization errors
(IOU in [0.15, 0.5)) as true positives with the localization rate reported
separately, while the strict variant requires IOU >= 0.5.  A background
error (IOU < 0.15) counts as both a false positive and a false negative:
the emitted box localizes nothing and the real target goes unfound.

Throughput is modeled from per-component call counts and per-call costs
rather than wall time, so speed comparisons are hardware-independent and
reproducible.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dataio import AnnotationRecord, FrameSequence, open_sequence
from .detectors import ReplayDetector, ReplayNoise
from .engine import DatParams, FrameOutcome, RunMode, Source, dat_run
from .geometry import (
    Category,
    Detection,
    MatchOutcome,
    MatchThresholds,
    classify_match,
)
from .stats import f_survival
from .trackers import make_tracker

DEFAULT_GRID_R = (50, 100, 200)
DEFAULT_GRID_C = (1, 3, 8, 9)
DEFAULT_GRID_K = (30, 60)


class UndefinedRateError(ArithmeticError):
    """Modeled FPS requested for a run with zero modeled time."""


@dataclass(frozen=True)
class CostModel:
    """Seconds per detector call / tracker update / idle frame."""

    c_detect: float = 1.0 / 1.5
    c_track: float = 1.0 / 155.0
    c_idle: float = 0.0

    def __post_init__(self):
        if min(self.c_detect, self.c_track, self.c_idle) < 0:
            raise ValueError("cost coefficients must be >= 0")


@dataclass(frozen=True)
class RunCounts:
    frames: int
    detector_calls: int
    tracker_updates: int
    idle_frames: int

    @classmethod
    def from_trace(cls, trace: Sequence[FrameOutcome]) -> "RunCounts":
        detector_calls = sum(1 for o in trace if o.detector_called)
        tracker_updates = sum(1 for o in trace if o.tracker_updated)
        idle = sum(1 for o in trace if not o.detector_called and not o.tracker_updated)
        return cls(len(trace), detector_calls, tracker_updates, idle)


def f1(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def modeled_fps(counts: RunCounts, cost: CostModel) -> float:
    total = (
        counts.detector_calls * cost.c_detect
        + counts.tracker_updates * cost.c_track
        + counts.idle_frames * cost.c_idle
    )
    if total <= 0.0:
        raise UndefinedRateError(
            f"modeled time is zero for counts {counts} under {cost}"
        )
    return counts.frames / total


@dataclass(frozen=True)
class EvaluationReport:
    category: str
    frames: int
    gt_frames: int
    tp_accurate: int
    tp_localization: int
    misses: int
    false_alarms: int
    background_errors: int
    correct_rejections: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    localization_error_rate: float
    precision_strict: float
    recall_strict: float
    f1_strict: float
    detector_calls: int
    tracker_updates: int
    idle_frames: int
    modeled_fps: Optional[float] = None
    wall_fps: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _divide(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def score_predictions(
    predictions: Sequence[Tuple[int, Optional[Detection]]],
    ground_truth: Union[FrameSequence, Iterable[AnnotationRecord]],
    category: Category,
    thresholds: MatchThresholds = MatchThresholds(),
    counts: Optional[RunCounts] = None,
    cost: Optional[CostModel] = None,
    wall_fps: Optional[float] = None,
) -> EvaluationReport:
    """Score one primary prediction per frame against ground truth.

    `predictions` must cover a contiguous frame range (absent predictions
    as None); ground-truth records outside that range are an error.
    """
    if isinstance(ground_truth, FrameSequence):
        records = ground_truth.annotations
    else:
        records = list(ground_truth)
    gt_by_frame = {
        rec.frame_index: rec.box for rec in records if rec.category is category
    }

    if not predictions:
        raise ValueError("no predictions to score")
    frames = [f for f, _ in predictions]
    lo, hi = min(frames), max(frames)
    if sorted(frames) != list(range(lo, hi + 1)):
        raise ValueError(f"prediction frames are not contiguous over {lo}..{hi}")
    outside = sorted(f for f in gt_by_frame if not lo <= f <= hi)
    if outside:
        raise ValueError(
            f"frame-range mismatch: predictions cover {lo}..{hi}, ground truth "
            f"references frames {outside[0]}..{outside[-1]} outside that range"
        )

    tally = {outcome: 0 for outcome in MatchOutcome}
    for frame_index, pred in predictions:
        tally[classify_match(pred, gt_by_frame.get(frame_index), thresholds)] += 1

    tp_acc = tally[MatchOutcome.ACCURATE]
    tp_loc = tally[MatchOutcome.LOCALIZATION_ERROR]
    bg = tally[MatchOutcome.BACKGROUND_ERROR]
    miss = tally[MatchOutcome.MISS]
    fa = tally[MatchOutcome.FALSE_ALARM]

    tp = tp_acc + tp_loc
    fp = bg + fa
    fn = bg + miss
    precision = _divide(tp, tp + fp)
    recall = _divide(tp, tp + fn)

    tp_s = tp_acc
    fp_s = bg + fa + tp_loc
    fn_s = bg + miss + tp_loc
    precision_s = _divide(tp_s, tp_s + fp_s)
    recall_s = _divide(tp_s, tp_s + fn_s)

    fps_value = None
    if counts is not None and cost is not None:
        fps_value = modeled_fps(counts, cost)

    return EvaluationReport(
        category=category.value,
        frames=len(predictions),
        gt_frames=len(gt_by_frame),
        tp_accurate=tp_acc,
        tp_localization=tp_loc,
        misses=miss,
        false_alarms=fa,
        background_errors=bg,
        correct_rejections=tally[MatchOutcome.CORRECT_REJECTION],
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1(precision, recall),
        localization_error_rate=_divide(tp_loc, tp),
        precision_strict=precision_s,
        recall_strict=recall_s,
        f1_strict=f1(precision_s, recall_s),
        detector_calls=counts.detector_calls if counts else 0,
        tracker_updates=counts.tracker_updates if counts else 0,
        idle_frames=counts.idle_frames if counts else 0,
        modeled_fps=fps_value,
        wall_fps=wall_fps,
    )


def trace_predictions(
    trace: Sequence[FrameOutcome], category: Category
) -> List[Tuple[int, Optional[Detection]]]:
    """Trace boxes as scoreable detections (confidence fixed at 1.0)."""
    out: List[Tuple[int, Optional[Detection]]] = []
    for o in trace:
        det = (
            Detection(box=o.box, category=category, confidence=1.0)
            if o.box is not None
            else None
        )
        out.append((o.frame_index, det))
    return out


def score_trace(
    trace: Sequence[FrameOutcome],
    ground_truth: Union[FrameSequence, Iterable[AnnotationRecord]],
    category: Category,
    thresholds: MatchThresholds = MatchThresholds(),
    cost: Optional[CostModel] = None,
    wall_fps: Optional[float] = None,
) -> EvaluationReport:
    return score_predictions(
        trace_predictions(trace, category),
        ground_truth,
        category,
        thresholds,
        counts=RunCounts.from_trace(trace),
        cost=cost,
        wall_fps=wall_fps,
    )


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    sd: float
    fold_means: Tuple[float, ...]


def aggregate(values_by_fold: Mapping[str, Sequence[float]]) -> AggregateStats:
    """Two-stage averaging: mean within each fold, then mean +/- sample SD
    over fold means (SD is 0 for a single fold, by convention)."""
    if not values_by_fold:
        raise ValueError("no folds to aggregate")
    fold_means = []
    for fold in sorted(values_by_fold):
        values = list(values_by_fold[fold])
        if not values:
            raise ValueError(f"fold {fold!r} has no values")
        fold_means.append(sum(values) / len(values))
    mean = sum(fold_means) / len(fold_means)
    if len(fold_means) < 2:
        sd = 0.0
    else:
        sd = math.sqrt(
            sum((m - mean) ** 2 for m in fold_means) / (len(fold_means) - 1)
        )
    return AggregateStats(mean=mean, sd=sd, fold_means=tuple(fold_means))


@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    sd: float


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    df_between: int
    df_within: int
    p_value: float


def anova_oneway(groups: Sequence[GroupSummary | Tuple[int, float, float]]) -> AnovaResult:
    """One-way ANOVA from per-group summary statistics (n, mean, sd)."""
    summaries = [g if isinstance(g, GroupSummary) else GroupSummary(*g) for g in groups]
    if len(summaries) < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(g.n < 2 for g in summaries):
        raise ValueError("every group needs n >= 2")
    n_total = sum(g.n for g in summaries)
    k = len(summaries)
    grand_mean = sum(g.n * g.mean for g in summaries) / n_total
    ss_between = sum(g.n * (g.mean - grand_mean) ** 2 for g in summaries)
    ss_within = sum((g.n - 1) * g.sd**2 for g in summaries)
    df_between = k - 1
    df_within = n_total - k
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0.0:
        f_value = 0.0 if ms_between == 0.0 else math.inf
    else:
        f_value = ms_between / ms_within
    return AnovaResult(
        f_statistic=f_value,
        df_between=df_between,
        df_within=df_within,
        p_value=f_survival(f_value, df_between, df_within),
    )


@dataclass(frozen=True)
class ParticipantRecord:
    id: str
    uems: int
    frames: int

    def __post_init__(self):
        if not 0 <= self.uems <= 50:
            raise ValueError(f"UEMS must be in [0, 50], got {self.uems}")
        if self.frames < 0:
            raise ValueError("frame count must be >= 0")


@dataclass(frozen=True)
class SplitResult:
    groups: Tuple[Tuple[ParticipantRecord, ...], ...]
    anova: Optional[AnovaResult]


_EXHAUSTIVE_LIMIT = 18


def _group_sizes(n: int, groups: int) -> List[int]:
    base, extra = divmod(n, groups)
    return [base + 1] * extra + [base] * (groups - extra)


def _means_variance(means: Sequence[float]) -> float:
    mu = sum(means) / len(means)
    return sum((m - mu) ** 2 for m in means) / len(means)


def _best_partition(uems: np.ndarray, sizes: List[int]) -> List[np.ndarray]:
    """Exhaustive minimum-variance balanced partition.

    Equal-size groups are deduplicated by pinning the smallest remaining
    index into the earlier group.  The final group is forced by the
    penultimate choice, so that level evaluates all candidates in one
    vectorized block and keeps only its argmin (first index on ties, so
    the result is deterministic for a fixed input order).
    """
    comb_cache: Dict[Tuple[int, int], np.ndarray] = {}

    def combos(m: int, k: int) -> np.ndarray:
        key = (m, k)
        if key not in comb_cache:
            comb_cache[key] = np.array(
                list(itertools.combinations(range(m), k)), dtype=np.intp
            ).reshape(-1, k)
        return comb_cache[key]

    best_var = math.inf
    best: Optional[List[np.ndarray]] = None

    def recurse(remaining: np.ndarray, level: int, means: List[float], assignment: List[np.ndarray]):
        nonlocal best_var, best
        size = sizes[level]
        rem_uems = uems[remaining]
        cand = combos(len(remaining), size)
        if size == sizes[level + 1]:
            cand = cand[cand[:, 0] == 0]  # pin smallest index to this group
        if level == len(sizes) - 2:
            last = sizes[level + 1]
            sums = rem_uems[cand].sum(axis=1)
            mean_a = sums / size
            mean_b = (rem_uems.sum() - sums) / last
            fixed = np.array(means)
            all_means = np.concatenate(
                [np.tile(fixed, (len(cand), 1)), mean_a[:, None], mean_b[:, None]],
                axis=1,
            )
            variances = all_means.var(axis=1)
            row = int(np.argmin(variances))
            if variances[row] < best_var - 1e-15:
                best_var = float(variances[row])
                pick = remaining[cand[row]]
                rest = np.setdiff1d(remaining, pick, assume_unique=True)
                best = assignment + [pick, rest]
            return
        for row in cand:
            pick = remaining[row]
            rest = np.setdiff1d(remaining, pick, assume_unique=True)
            recurse(rest, level + 1, means + [float(uems[pick].mean())], assignment + [pick])

    recurse(np.arange(len(uems), dtype=np.intp), 0, [], [])
    return best


def _greedy_partition(uems: np.ndarray, sizes: List[int]) -> List[np.ndarray]:
    """Snake-draft seed plus pairwise swap refinement (for larger rosters)."""
    order = np.argsort(-uems, kind="stable")
    buckets: List[List[int]] = [[] for _ in sizes]
    direction = 1
    g = 0
    for idx in order:
        while len(buckets[g]) >= sizes[g]:
            g += direction
            if g in (-1, len(sizes)):
                direction *= -1
                g += direction
        buckets[g].append(int(idx))
        g += direction
        if g in (-1, len(sizes)):
            direction *= -1
            g += direction

    def variance(bs: List[List[int]]) -> float:
        return _means_variance([float(uems[b].mean()) for b in map(np.array, bs)])

    improved = True
    while improved:
        improved = False
        for a, b in itertools.combinations(range(len(buckets)), 2):
            for i in range(len(buckets[a])):
                for j in range(len(buckets[b])):
                    trial = [list(x) for x in buckets]
                    trial[a][i], trial[b][j] = trial[b][j], trial[a][i]
                    if variance(trial) < variance(buckets) - 1e-15:
                        buckets = trial
                        improved = True
    return [np.array(sorted(b), dtype=np.intp) for b in buckets]


def split_participants(
    records: Sequence[ParticipantRecord], groups: int = 3
) -> SplitResult:
    """Partition participants into UEMS-balanced groups.

    Group sizes differ by at most one; the returned split minimizes the
    variance of group mean UEMS (exhaustively for up to 18 participants,
    greedy + swap refinement above).  Deterministic for a fixed input:
    records are processed in lexicographic id order and ties keep the
    first partition found.
    """
    if groups < 2:
        raise ValueError("need at least two groups")
    if len(records) < groups:
        raise ValueError(f"cannot split {len(records)} participants into {groups} groups")
    ordered = sorted(records, key=lambda r: r.id)
    uems = np.array([r.uems for r in ordered], dtype=np.float64)
    sizes = _group_sizes(len(ordered), groups)

    if len(ordered) <= _EXHAUSTIVE_LIMIT:
        best = _best_partition(uems, sizes)
    else:
        best = _greedy_partition(uems, sizes)

    member_groups = tuple(
        tuple(ordered[i] for i in sorted(map(int, idx))) for idx in best
    )
    anova: Optional[AnovaResult] = None
    if all(len(g) >= 2 for g in member_groups):
        summaries = []
        for g in member_groups:
            vals = np.array([m.uems for m in g], dtype=np.float64)
            summaries.append(
                GroupSummary(len(g), float(vals.mean()), float(vals.std(ddof=1)))
            )
        anova = anova_oneway(summaries)
    return SplitResult(groups=member_groups, anova=anova)


@dataclass(frozen=True)
class SweepRow:
    reset_iterations: int
    consecutive_iou: int
    check_iterations: int
    f1_mean: float
    f1_sd: float
    f1_strict_mean: float
    modeled_fps: float
    detector_fraction: float

    @property
    def name(self) -> str:
        return f"{self.reset_iterations}/{self.consecutive_iou}/{self.check_iterations}"


@dataclass(frozen=True)
class SweepConfig:
    grid_r: Tuple[int, ...] = DEFAULT_GRID_R
    grid_c: Tuple[int, ...] = DEFAULT_GRID_C
    grid_k: Tuple[int, ...] = DEFAULT_GRID_K
    tracker: str = "mf"
    noise: ReplayNoise = ReplayNoise()
    category: Category = Category.LEFT
    overlap_threshold: float = 0.1
    cost: CostModel = CostModel()
    thresholds: MatchThresholds = MatchThresholds()

    def cells(self) -> List[Tuple[int, int, int]]:
        return [
            (r, c, k)
            for r in self.grid_r
            for c in self.grid_c
            for k in self.grid_k
        ]


def _evaluate_cell(
    cell: Tuple[int, int, int],
    sources: Sequence[Union[str, Path, FrameSequence]],
    config: SweepConfig,
) -> SweepRow:
    r, c, k = cell
    params = DatParams(
        reset_iterations=r,
        consecutive_iou=c,
        check_iterations=k,
        overlap_threshold=config.overlap_threshold,
        category=config.category,
    )
    f1_by_seq: Dict[str, List[float]] = {}
    strict_values = []
    total = RunCounts(0, 0, 0, 0)
    for pos, source in enumerate(sources):
        seq = source if isinstance(source, FrameSequence) else open_sequence(source)
        detector = ReplayDetector(seq, config.noise)
        trace = dat_run(
            seq, detector, lambda: make_tracker(config.tracker), params, RunMode.DAT
        )
        report = score_trace(trace, seq, config.category, config.thresholds)
        label = seq.sequence_id or f"seq{pos}"
        f1_by_seq[f"{pos:04d}:{label}"] = [report.f1]
        strict_values.append(report.f1_strict)
        counts = RunCounts.from_trace(trace)
        total = RunCounts(
            total.frames + counts.frames,
            total.detector_calls + counts.detector_calls,
            total.tracker_updates + counts.tracker_updates,
            total.idle_frames + counts.idle_frames,
        )
    stats = aggregate(f1_by_seq)
    return SweepRow(
        reset_iterations=r,
        consecutive_iou=c,
        check_iterations=k,
        f1_mean=stats.mean,
        f1_sd=stats.sd,
        f1_strict_mean=sum(strict_values) / len(strict_values),
        modeled_fps=modeled_fps(total, config.cost),
        detector_fraction=total.detector_calls / total.frames if total.frames else 0.0,
    )


def sweep_parameters(
    sources: Sequence[Union[str, Path, FrameSequence]],
    config: SweepConfig = SweepConfig(),
    jobs: int = 1,
) -> List[SweepRow]:
    """Evaluate every grid cell; rows sorted by F1 then modeled FPS, both
    descending.  Parallel evaluation (jobs > 1) requires path sources so
    each worker can open its own reader."""
    if not sources:
        raise ValueError("sweep needs at least one sequence")
    cells = config.cells()
    if not cells:
        raise ValueError("sweep grid is empty")
    if jobs > 1 and all(not isinstance(s, FrameSequence) for s in sources):
        paths = [str(s) for s in sources]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(_evaluate_cell, cells, itertools.repeat(paths), itertools.repeat(config))
            )
    else:
        rows = [_evaluate_cell(cell, sources, config) for cell in cells]
    rows.sort(
        key=lambda row: (
            -row.f1_mean,
            -row.modeled_fps,
            row.reset_iterations,
            row.consecutive_iou,
            row.check_iterations,
        )
    )
    return rows

"""Detection scoring: IoU matching, per-class metrics, multi-run aggregation,
and the mean-rank model comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .boxes import PixelBox
from .errors import ValidationError
from .geodesy import BACKGROUND_CLASS_ID
from .nms import Detection, iou, sort_key

#: One ground-truth instance: (class_id, box in global pixels).
GroundTruth = tuple[int, PixelBox]


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching predictions to ground truth on one image.

    ``pairs`` holds (pred index, gt index, iou); ``fp``/``fn`` the unmatched
    indices. Class arrays are carried along so metrics can be derived from
    the result alone.
    """

    pairs: tuple[tuple[int, int, float], ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]
    pred_classes: tuple[int, ...]
    gt_classes: tuple[int, ...]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    precision: float
    recall: float
    f1: float
    support: int


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> MatchResult:
    """Greedy confidence-ordered matching.

    Predictions are visited best-first (total order, so ties are stable);
    each takes the unmatched ground-truth box of highest IoU at or above
    the threshold (lowest gt index on IoU ties), same class only when
    ``class_aware``. Leftover predictions are false positives, leftover
    ground truth false negatives.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    order = sorted(range(len(preds)), key=lambda i: sort_key(preds[i]))
    taken = [False] * len(gts)
    pairs = []
    for pi in order:
        pred = preds[pi]
        best_iou, best_gi = 0.0, None
        for gi, (gt_class, gt_box) in enumerate(gts):
            if taken[gi]:
                continue
            if class_aware and gt_class != pred.class_id:
                continue
            overlap = iou(pred.box, gt_box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou, best_gi = overlap, gi
        if best_gi is not None:
            taken[best_gi] = True
            pairs.append((pi, best_gi, best_iou))
    matched_preds = {pi for pi, _, _ in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        fp=tuple(i for i in range(len(preds)) if i not in matched_preds),
        fn=tuple(i for i in range(len(gts)) if not taken[i]),
        pred_classes=tuple(p.class_id for p in preds),
        gt_classes=tuple(c for c, _ in gts),
    )


def per_class_counts(match: MatchResult) -> dict[int, ConfusionCounts]:
    """Confusion counts per class.

    A pair counts as TP only when prediction and ground truth agree on the
    class (always true under class-aware matching); a class-crossing pair
    from agnostic matching counts against both sides.
    """
    counts: dict[int, ConfusionCounts] = {}

    def bump(class_id: int, tp: int = 0, fp: int = 0, fn: int = 0):
        counts[class_id] = counts.get(class_id, ConfusionCounts()) + ConfusionCounts(tp, fp, fn)

    for pi, gi, _ in match.pairs:
        pc, gc = match.pred_classes[pi], match.gt_classes[gi]
        if pc == gc:
            bump(pc, tp=1)
        else:
            bump(pc, fp=1)
            bump(gc, fn=1)
    for pi in match.fp:
        bump(match.pred_classes[pi], fp=1)
    for gi in match.fn:
        bump(match.gt_classes[gi], fn=1)
    return counts


def metrics_from_counts(counts: Mapping[int, ConfusionCounts]) -> list[ClassMetrics]:
    """Precision/recall/F1 per class; 0/0 ratios resolve to 0."""
    out = []
    for class_id in sorted(counts):
        c = counts[class_id]
        precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
        recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append(ClassMetrics(class_id, precision, recall, f1, c.support))
    return out


def per_class_metrics(match: MatchResult, class_ids: Iterable[int] | None = None) -> list[ClassMetrics]:
    counts = per_class_counts(match)
    if class_ids is not None:
        counts = {c: counts.get(c, ConfusionCounts()) for c in class_ids}
    return metrics_from_counts(counts)


def sum_counts(per_image: Iterable[Mapping[int, ConfusionCounts]]) -> dict[int, ConfusionCounts]:
    total: dict[int, ConfusionCounts] = {}
    for counts in per_image:
        for class_id, c in counts.items():
            total[class_id] = total.get(class_id, ConfusionCounts()) + c
    return total


def macro_f1(metrics: Sequence[ClassMetrics]) -> float:
    """Unweighted mean of per-class F1."""
    if not metrics:
        raise ValidationError("macro F1 of an empty metric list")
    return sum(m.f1 for m in metrics) / len(metrics)


def weighted_accuracy(metrics: Sequence[ClassMetrics]) -> float:
    """Support-weighted mean recall (the 'accuracy' we report; the term is
    ambiguous in common usage, so the support weighting is explicit)."""
    if not metrics:
        raise ValidationError("weighted accuracy of an empty metric list")
    total = sum(m.support for m in metrics)
    if total == 0:
        return 0.0
    return sum(m.recall * m.support for m in metrics) / total


def evaluate_runs(
    runs,
    ground_truth: Mapping[str, Sequence[GroundTruth]],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
    exclude_classes: frozenset[int] = frozenset({BACKGROUND_CLASS_ID}),
) -> list[ClassMetrics]:
    """Match every run against its image's ground truth and sum the counts.

    Images present in ``ground_truth`` but absent from the runs contribute
    pure false negatives. Background-class boxes are excluded on both sides.
    """
    counts_per_image = []
    seen = set()
    for run in runs:
        if run.image_id not in ground_truth:
            raise ValidationError(f"run references unannotated image '{run.image_id}'")
        seen.add(run.image_id)
        preds = [d for d in run.detections if d.class_id not in exclude_classes]
        gts = [g for g in ground_truth[run.image_id] if g[0] not in exclude_classes]
        counts_per_image.append(
            per_class_counts(match_detections(preds, gts, iou_threshold, class_aware))
        )
    for image_id, gts in ground_truth.items():
        if image_id in seen:
            continue
        missed = {}
        for class_id, _ in gts:
            if class_id in exclude_classes:
                continue
            missed[class_id] = missed.get(class_id, ConfusionCounts()) + ConfusionCounts(fn=1)
        counts_per_image.append(missed)
    return metrics_from_counts(sum_counts(counts_per_image))


# --- multi-run aggregation ----------------------------------------------------


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float  # population standard deviation

    def formatted(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


@dataclass(frozen=True)
class RunAggregate:
    """Mean and population std of each metric, per class, over repeated runs."""

    n_runs: int
    per_class: dict[int, dict[str, MetricStats]]
    support: dict[int, int]


def _mean_and_pstd(values: Sequence[float]) -> MetricStats:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return MetricStats(mean=mean, std=math.sqrt(var))


def aggregate_runs(runs: Sequence[Sequence[ClassMetrics]]) -> RunAggregate:
    """Aggregate per-class metrics over independent runs (mean, population std)."""
    if not runs:
        raise ValidationError("no runs to aggregate")
    class_sets = [tuple(sorted(m.class_id for m in run)) for run in runs]
    if len(set(class_sets)) != 1:
        raise ValidationError(f"runs disagree on class sets: {sorted(set(class_sets))}")
    by_class: dict[int, dict[str, list[float]]] = {}
    support: dict[int, int] = {}
    for run in runs:
        for m in run:
            slot = by_class.setdefault(m.class_id, {"precision": [], "recall": [], "f1": []})
            slot["precision"].append(m.precision)
            slot["recall"].append(m.recall)
            slot["f1"].append(m.f1)
            support[m.class_id] = m.support
    per_class = {
        class_id: {metric: _mean_and_pstd(values) for metric, values in slots.items()}
        for class_id, slots in by_class.items()
    }
    return RunAggregate(n_runs=len(runs), per_class=per_class, support=support)


# --- mean-rank model comparison -----------------------------------------------


@dataclass(frozen=True)
class RankTable:
    """Per-class model ranks (1 = best score) and their per-model means."""

    models: tuple[str, ...]
    classes: tuple[Any, ...]
    ranks: dict[str, dict[Any, float]]
    mean_rank: dict[str, float]


def _average_ranks(values: Sequence[float]) -> list[float]:
    # Rank 1 = highest value; ties share the average of their positions.
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def mean_rank(scores: Mapping[str, Mapping[Any, float]]) -> RankTable:
    """Rank models per class by score (descending) and average the ranks.

    ``scores`` maps model -> class -> score; every model must cover the
    same classes. Lower mean rank is better.
    """
    models = tuple(scores)
    if len(models) < 2:
        raise ValidationError("mean rank needs at least two models")
    class_sets = {tuple(sorted(scores[m], key=str)) for m in models}
    if len(class_sets) != 1:
        raise ValidationError("models disagree on the class set")
    classes = class_sets.pop()
    if not classes:
        raise ValidationError("mean rank needs at least one class")
    ranks: dict[str, dict[Any, float]] = {m: {} for m in models}
    for cls in classes:
        class_ranks = _average_ranks([scores[m][cls] for m in models])
        for m, r in zip(models, class_ranks):
            ranks[m][cls] = r
    means = {m: sum(ranks[m].values()) / len(classes) for m in models}
    return RankTable(models=models, classes=classes, ranks=ranks, mean_rank=means)


# --- presentation ---------------------------------------------------------------

_CLASS_LABELS = {0: "0 (Large)", 1: "1 (Small)", 2: "2 (Medium)"}


def format_metrics_table(metrics: Sequence[ClassMetrics]) -> str:
    header = f"{'Class':<12} {'Precision':>10} {'Recall':>10} {'F1-score':>10} {'Support':>8}"
    lines = [header, "-" * len(header)]
    for m in metrics:
        label = _CLASS_LABELS.get(m.class_id, str(m.class_id))
        lines.append(
            f"{label:<12} {m.precision:>10.2f} {m.recall:>10.2f} {m.f1:>10.2f} {m.support:>8}"
        )
    return "\n".join(lines)


def format_aggregate_table(agg: RunAggregate) -> str:
    header = f"{'Class':<12} {'Precision':>14} {'Recall':>14} {'F1-score':>14} {'Support':>8}"
    lines = [header, "-" * len(header)]
    for class_id in sorted(agg.per_class):
        stats = agg.per_class[class_id]
        label = _CLASS_LABELS.get(class_id, str(class_id))
        lines.append(
            f"{label:<12} {stats['precision'].formatted():>14} "
            f"{stats['recall'].formatted():>14} {stats['f1'].formatted():>14} "
            f"{agg.support.get(class_id, 0):>8}"
        )
    return "\n".join(lines)


def format_rank_table(table: RankTable) -> str:
    width = max(len(m) for m in table.models) + 2
    header = f"{'Class':<16}" + "".join(f"{m:>{width}}" for m in table.models)
    lines = [header, "-" * len(header)]

    def fmt(rank: float) -> str:
        return f"{int(rank)}" if rank == int(rank) else f"{rank:.1f}"

    for cls in table.classes:
        label = _CLASS_LABELS.get(cls, str(cls))
        lines.append(
            f"{label:<16}" + "".join(f"{fmt(table.ranks[m][cls]):>{width}}" for m in table.models)
        )
    lines.append(
        f"{'Mean-Rank':<16}"
        + "".join(f"{table.mean_rank[m]:>{width}.2f}" for m in table.models)
    )
    return "\n".join(lines)


def metrics_to_json(metrics: Sequence[ClassMetrics]) -> dict:
    return {
        "per_class": {
            str(m.class_id): {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }
            for m in metrics
        },
        "macro_f1": macro_f1(metrics) if metrics else 0.0,
        "weighted_accuracy": weighted_accuracy(metrics) if metrics else 0.0,
    }

"""Sequence-level and set-level F1 scoring, confusion matrices, the
annotator-vs-consensus harness, and deterministic CSV/SVG report export.

Sequence scoring tallies per output position; set scoring reduces each
record to its set of unique classes and tallies per record. Both weight
aggregates by ground-truth support; a class absent from truth and
prediction scores 0 with support 0 and cannot influence the aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CLASS_NAMES, NUM_CLASSES
from .errors import ContractViolationError, CoverageError, InvalidInputError


@dataclass(frozen=True)
class ClassScores:
    label: str
    tp: int
    fp: int
    fn: int
    support: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, label: str, tp: int, fp: int, fn: int,
                    support: int) -> "ClassScores":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        return cls(label, tp, fp, fn, support, precision, recall, f1)


@dataclass(frozen=True)
class AggregateScores:
    """Support-weighted means of the per-class precision/recall/F1."""

    precision: float
    recall: float
    f1: float
    support: int

    @classmethod
    def from_classes(cls, scores: list[ClassScores]) -> "AggregateScores":
        total = sum(s.support for s in scores)
        if total == 0:
            return cls(0.0, 0.0, 0.0, 0)
        return cls(
            precision=sum(s.precision * s.support for s in scores) / total,
            recall=sum(s.recall * s.support for s in scores) / total,
            f1=sum(s.f1 * s.support for s in scores) / total,
            support=total,
        )


@dataclass
class EvalReport:
    sequence: list[ClassScores]
    sequence_aggregate: AggregateScores
    set: list[ClassScores]
    set_aggregate: AggregateScores
    confusion: np.ndarray  # rows = truth, cols = prediction


def _check_pairs(preds, truths, require_equal_lengths: bool):
    if len(preds) != len(truths):
        raise ContractViolationError(
            f"{len(preds)} prediction grids vs {len(truths)} truth grids")
    if not truths:
        raise InvalidInputError("no records to score")
    if require_equal_lengths:
        for i, (p, t) in enumerate(zip(preds, truths)):
            if len(p) != len(t):
                raise ContractViolationError(
                    f"record {i}: prediction has {len(p)} positions, "
                    f"truth has {len(t)}")


def sequence_scores(preds, truths, class_count: int = NUM_CLASSES):
    """Position-wise multi-class tally across all records."""
    _check_pairs(preds, truths, require_equal_lengths=True)
    tp = np.zeros(class_count, dtype=np.int64)
    fp = np.zeros(class_count, dtype=np.int64)
    fn = np.zeros(class_count, dtype=np.int64)
    support = np.zeros(class_count, dtype=np.int64)
    for p, t in zip(preds, truths):
        p = np.asarray(p)
        t = np.asarray(t)
        hit = p == t
        tp += np.bincount(t[hit], minlength=class_count)
        fn += np.bincount(t[~hit], minlength=class_count)
        fp += np.bincount(p[~hit], minlength=class_count)
        support += np.bincount(t, minlength=class_count)
    scores = [ClassScores.from_counts(CLASS_NAMES[c] if c < len(CLASS_NAMES)
                                      else str(c), int(tp[c]), int(fp[c]),
                                      int(fn[c]), int(support[c]))
              for c in range(class_count)]
    return scores, AggregateScores.from_classes(scores)


def set_scores(preds, truths, class_count: int = NUM_CLASSES):
    """Per-record unique-class-set tally; ignores time alignment."""
    _check_pairs(preds, truths, require_equal_lengths=False)
    tp = np.zeros(class_count, dtype=np.int64)
    fp = np.zeros(class_count, dtype=np.int64)
    fn = np.zeros(class_count, dtype=np.int64)
    for p, t in zip(preds, truths):
        pset = set(np.unique(np.asarray(p)).tolist())
        tset = set(np.unique(np.asarray(t)).tolist())
        for c in pset & tset:
            tp[c] += 1
        for c in tset - pset:
            fn[c] += 1
        for c in pset - tset:
            fp[c] += 1
    scores = [ClassScores.from_counts(CLASS_NAMES[c] if c < len(CLASS_NAMES)
                                      else str(c), int(tp[c]), int(fp[c]),
                                      int(fn[c]), int(tp[c] + fn[c]))
              for c in range(class_count)]
    return scores, AggregateScores.from_classes(scores)


def confusion(preds, truths, class_count: int = NUM_CLASSES) -> np.ndarray:
    """Counts[truth][prediction], accumulated per position."""
    _check_pairs(preds, truths, require_equal_lengths=True)
    matrix = np.zeros((class_count, class_count), dtype=np.int64)
    for p, t in zip(preds, truths):
        flat = np.asarray(t) * class_count + np.asarray(p)
        matrix += np.bincount(flat, minlength=class_count ** 2).reshape(
            class_count, class_count)
    return matrix


def position_accuracy(preds, truths) -> float:
    """Micro accuracy over all positions (= weighted sequence recall)."""
    _check_pairs(preds, truths, require_equal_lengths=True)
    correct = sum(int((np.asarray(p) == np.asarray(t)).sum())
                  for p, t in zip(preds, truths))
    total = sum(len(t) for t in truths)
    return correct / total


def evaluate_grids(preds, truths, class_count: int = NUM_CLASSES) -> EvalReport:
    seq, seq_agg = sequence_scores(preds, truths, class_count)
    st, st_agg = set_scores(preds, truths, class_count)
    return EvalReport(seq, seq_agg, st, st_agg,
                      confusion(preds, truths, class_count))


# ---------------------------------------------------------------------------
# Annotator comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanScores:
    label: str
    precision: float
    recall: float
    f1: float


@dataclass
class AnnotatorComparison:
    per_annotator: dict[str, EvalReport]
    mean_sequence: list[MeanScores] = field(default_factory=list)
    mean_sequence_aggregate: MeanScores | None = None
    mean_set: list[MeanScores] = field(default_factory=list)
    mean_set_aggregate: MeanScores | None = None
    mean_sequence_accuracy: float = 0.0


def annotator_comparison(annotators: dict[str, list], consensus: list,
                         class_count: int = NUM_CLASSES) -> AnnotatorComparison:
    """Score each annotator against the consensus, then average the scalar
    scores across annotators (unweighted mean per class and aggregate)."""
    if not annotators:
        raise InvalidInputError("no annotators to compare")
    for name, grids in annotators.items():
        if len(grids) != len(consensus):
            raise CoverageError(
                f"annotator {name!r} covers {len(grids)} records, "
                f"consensus has {len(consensus)}")
    reports = {name: evaluate_grids(grids, consensus, class_count)
               for name, grids in annotators.items()}
    accuracies = [position_accuracy(grids, consensus)
                  for grids in annotators.values()]

    def mean_over(getter):
        rows = []
        for c in range(class_count):
            per = [getter(rep)[c] for rep in reports.values()]
            rows.append(MeanScores(
                label=per[0].label,
                precision=float(np.mean([s.precision for s in per])),
                recall=float(np.mean([s.recall for s in per])),
                f1=float(np.mean([s.f1 for s in per]))))
        return rows

    def mean_agg(getter):
        per = [getter(rep) for rep in reports.values()]
        return MeanScores(
            label="aggregate",
            precision=float(np.mean([s.precision for s in per])),
            recall=float(np.mean([s.recall for s in per])),
            f1=float(np.mean([s.f1 for s in per])))

    return AnnotatorComparison(
        per_annotator=reports,
        mean_sequence=mean_over(lambda r: r.sequence),
        mean_sequence_aggregate=mean_agg(lambda r: r.sequence_aggregate),
        mean_set=mean_over(lambda r: r.set),
        mean_set_aggregate=mean_agg(lambda r: r.set_aggregate),
        mean_sequence_accuracy=float(np.mean(accuracies)),
    )


# ---------------------------------------------------------------------------
# Export: CSV (exact float round-trip via repr) and SVG heatmap
# ---------------------------------------------------------------------------

SCORES_HEADER = "metric,class,precision,recall,f1,support"


def _score_lines(metric: str, scores: list[ClassScores],
                 agg: AggregateScores) -> list[str]:
    lines = [f"{metric},{s.label},{s.precision!r},{s.recall!r},"
             f"{s.f1!r},{s.support}" for s in scores]
    lines.append(f"{metric},aggregate,{agg.precision!r},{agg.recall!r},"
                 f"{agg.f1!r},{agg.support}")
    return lines


def scores_to_csv(metric: str, scores: list[ClassScores],
                  agg: AggregateScores) -> bytes:
    return ("\n".join([SCORES_HEADER] + _score_lines(metric, scores, agg))
            + "\n").encode()


def report_to_csv(report: EvalReport) -> bytes:
    lines = [SCORES_HEADER]
    lines += _score_lines("sequence", report.sequence, report.sequence_aggregate)
    lines += _score_lines("set", report.set, report.set_aggregate)
    return ("\n".join(lines) + "\n").encode()


def parse_scores_csv(blob: bytes):
    lines = blob.decode().strip().splitlines()
    if lines[0] != SCORES_HEADER:
        raise ContractViolationError(f"unexpected scores header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        metric, label, p, r, f1, support = line.split(",")
        rows.append((metric, label, float(p), float(r), float(f1), int(support)))
    return rows


def confusion_to_csv(matrix: np.ndarray) -> bytes:
    names = CLASS_NAMES[: matrix.shape[0]]
    lines = ["truth," + ",".join(names)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(str(int(v)) for v in matrix[i]))
    return ("\n".join(lines) + "\n").encode()


def parse_confusion_csv(blob: bytes) -> np.ndarray:
    lines = blob.decode().strip().splitlines()
    names = lines[0].split(",")[1:]
    matrix = np.zeros((len(names), len(names)), dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        matrix[i] = [int(v) for v in cells[1:]]
    return matrix


_CELL = 36
_MARGIN = 110


def confusion_to_svg(matrix: np.ndarray) -> bytes:
    """Row-normalized heatmap; byte-stable for a fixed matrix."""
    n = matrix.shape[0]
    names = CLASS_NAMES[:n]
    size = _MARGIN + n * _CELL + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
           f'height="{size}" font-family="monospace" font-size="11">']
    row_sums = matrix.sum(axis=1)
    for i in range(n):
        for j in range(n):
            frac = (matrix[i, j] / row_sums[i]) if row_sums[i] else 0.0
            # white -> dark blue
            red = green = int(round(255 * (1.0 - 0.85 * frac)))
            blue = int(round(255 - 100 * frac))
            x = _MARGIN + j * _CELL
            y = _MARGIN + i * _CELL
            out.append(
                f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
                f'fill="rgb({red},{green},{blue})" stroke="#ccc"/>')
            if matrix[i, j]:
                shade = "#fff" if frac > 0.5 else "#333"
                out.append(
                    f'<text x="{x + _CELL // 2}" y="{y + _CELL // 2 + 4}" '
                    f'text-anchor="middle" fill="{shade}">{int(matrix[i, j])}'
                    f'</text>')
    for i, name in enumerate(names):
        y = _MARGIN + i * _CELL + _CELL // 2 + 4
        out.append(f'<text x="{_MARGIN - 6}" y="{y}" text-anchor="end">'
                   f'{name}</text>')
        x = _MARGIN + i * _CELL + _CELL // 2
        out.append(f'<text x="{x}" y="{_MARGIN - 6}" text-anchor="end" '
                   f'transform="rotate(-60 {x} {_MARGIN - 6})">{name}</text>')
    out.append("</svg>")
    return "\n".join(out).encode()


def report_export(report: EvalReport, format: str) -> bytes:
    """Render a report as `csv` (scores) or `svg-heatmap` (confusion)."""
    if format == "csv":
        return report_to_csv(report)
    if format == "svg-heatmap":
        return confusion_to_svg(report.confusion)
    raise ContractViolationError(f"unknown export format {format!r}")

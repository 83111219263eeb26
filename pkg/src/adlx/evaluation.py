"""Scoring, dataset splitting, and report serialization."""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .errors import ClassTooSmall, EmptyInput, InvalidParameters, UnknownActivity
from .model import ActivitySet

FAIL_HALLUCINATED = "hallucinated"
FAIL_UNPARSEABLE = "unparseable"
FAIL_SKIPPED = "skipped"
FAILURE_KINDS = (FAIL_HALLUCINATED, FAIL_UNPARSEABLE, FAIL_SKIPPED)


@dataclass(frozen=True, slots=True)
class FailedPrediction:
    """A window that produced no usable label; consumes support."""

    kind: str

    def __post_init__(self) -> None:
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"unknown failure kind {self.kind!r}")


Predicted = Union[str, FailedPrediction]


@dataclass(frozen=True, slots=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    classes: tuple[str, ...]
    per_class: dict[str, ClassMetrics]
    weighted_f1: float
    confusion: dict[str, dict[str, int]]
    failures_by_class: dict[str, int]
    hallucinated: int
    unparseable: int
    skipped: int

    @property
    def total_support(self) -> int:
        return sum(m.support for m in self.per_class.values())


def score(
    pairs: Sequence[tuple[str, Predicted]], activities: ActivitySet
) -> EvalReport:
    """Score (truth, predicted-or-failure) pairs over the candidate set.

    Rows of the confusion matrix are truth, columns are predictions.
    Failures consume their class's support without entering the matrix,
    so they depress recall (and F1) but never precision of other classes.
    Zero denominators yield metric 0 by convention.
    """
    if not pairs:
        raise EmptyInput("no prediction pairs to score")
    classes = tuple(activities)
    confusion = {t: {p: 0 for p in classes} for t in classes}
    failures_by_class = {t: 0 for t in classes}
    fail_counts = {kind: 0 for kind in FAILURE_KINDS}
    for truth, predicted in pairs:
        if truth not in activities:
            raise UnknownActivity(f"truth label {truth!r} is not a candidate")
        truth = activities.canonical(truth)
        if isinstance(predicted, FailedPrediction):
            failures_by_class[truth] += 1
            fail_counts[predicted.kind] += 1
            continue
        if predicted not in activities:
            raise UnknownActivity(
                f"predicted label {predicted!r} is not a candidate"
            )
        confusion[truth][activities.canonical(predicted)] += 1

    support = {
        t: sum(confusion[t].values()) + failures_by_class[t] for t in classes
    }
    total = sum(support.values())
    per_class: dict[str, ClassMetrics] = {}
    weighted = 0.0
    for c in classes:
        tp = confusion[c][c]
        predicted_c = sum(confusion[t][c] for t in classes)
        precision = tp / predicted_c if predicted_c else 0.0
        recall = tp / support[c] if support[c] else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        per_class[c] = ClassMetrics(precision, recall, f1, support[c])
        weighted += (support[c] / total) * f1
    return EvalReport(
        classes=classes,
        per_class=per_class,
        weighted_f1=weighted,
        confusion=confusion,
        failures_by_class=failures_by_class,
        hallucinated=fail_counts[FAIL_HALLUCINATED],
        unparseable=fail_counts[FAIL_UNPARSEABLE],
        skipped=fail_counts[FAIL_SKIPPED],
    )


def split_train_test(
    labeled: Sequence[tuple[object, str]],
    train_fraction: float,
    seed: int,
) -> tuple[list[tuple[object, str]], list[tuple[object, str]]]:
    """Deterministic stratified split of (item, label) pairs.

    Each class contributes round(n * fraction) items to the train side,
    clamped so both sides stay non-empty.  Original order is preserved
    within each side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidParameters(
            f"train fraction must lie in (0, 1), got {train_fraction}"
        )
    by_class: dict[str, list[int]] = {}
    for idx, (_item, label) in enumerate(labeled):
        by_class.setdefault(label, []).append(idx)
    train_idx: set[int] = set()
    for label in sorted(by_class):
        indices = by_class[label]
        n = len(indices)
        if n < 2:
            raise ClassTooSmall(
                f"class {label!r} has {n} item(s); at least 2 are needed to split"
            )
        k = int(n * train_fraction + 0.5)
        k = max(1, min(n - 1, k))
        rng = random.Random(f"{seed}:{label}")
        picked = rng.sample(indices, k)
        train_idx.update(picked)
    train = [pair for i, pair in enumerate(labeled) if i in train_idx]
    test = [pair for i, pair in enumerate(labeled) if i not in train_idx]
    return train, test


def downsample(
    labeled: Sequence[tuple[object, str]],
    classes: Sequence[str],
    seed: int,
    activities: Optional[ActivitySet] = None,
) -> list[tuple[object, str]]:
    """Reduce the named classes to the median count of the other classes.

    Sampling is seeded and uniform; order is preserved.  With no classes
    named, or no other classes to take a median from, the input is
    returned unchanged.
    """
    named = set(classes)
    if activities is not None:
        for label in named:
            if label not in activities:
                raise UnknownActivity(f"class {label!r} is not a candidate")
    if not named:
        return list(labeled)
    counts: dict[str, int] = {}
    for _item, label in labeled:
        counts[label] = counts.get(label, 0) + 1
    remaining = sorted(n for label, n in counts.items() if label not in named)
    if not remaining:
        return list(labeled)
    mid = len(remaining) // 2
    if len(remaining) % 2:
        target = remaining[mid]
    else:
        target = (remaining[mid - 1] + remaining[mid]) // 2
    keep_idx: set[int] = set()
    by_class: dict[str, list[int]] = {}
    for idx, (_item, label) in enumerate(labeled):
        by_class.setdefault(label, []).append(idx)
    for label, indices in by_class.items():
        if label in named and len(indices) > target:
            rng = random.Random(f"{seed}:{label}")
            keep_idx.update(rng.sample(indices, target))
        else:
            keep_idx.update(indices)
    return [pair for i, pair in enumerate(labeled) if i in keep_idx]


def report_to_json(report: EvalReport) -> str:
    doc = {
        "weighted_f1": report.weighted_f1,
        "classes": list(report.classes),
        "per_class": {
            c: {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }
            for c, m in report.per_class.items()
        },
        "confusion": report.confusion,
        "failures": {
            "hallucinated": report.hallucinated,
            "unparseable": report.unparseable,
            "skipped": report.skipped,
            "by_class": report.failures_by_class,
        },
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def confusion_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["truth\\predicted", *report.classes])
    for t in report.classes:
        writer.writerow([t, *(report.confusion[t][p] for p in report.classes)])
    return buf.getvalue()


def report_to_text(report: EvalReport) -> str:
    width = max((len(c) for c in report.classes), default=5)
    width = max(width, len("class"))
    lines = [
        f"{'class':<{width}}  precision  recall  f1      support",
    ]
    for c in report.classes:
        m = report.per_class[c]
        lines.append(
            f"{c:<{width}}  {m.precision:9.4f}  {m.recall:6.4f}  {m.f1:6.4f}  {m.support:7d}"
        )
    lines.append("")
    lines.append(f"weighted F1: {report.weighted_f1:.4f}")
    lines.append(
        "failures: "
        f"hallucinated={report.hallucinated} "
        f"unparseable={report.unparseable} "
        f"skipped={report.skipped}"
    )
    return "\n".join(lines) + "\n"

"""Corpus-level evaluation: exact-match rates, tolerant rates, bracket
accuracy, and complexity-bucketed breakdowns."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .treebank import (
    NO_PARENT,
    ParentAnnotation,
    brackets_balanced,
    sequence_complexity,
)
from .vocab import TokenSeq


class LengthMismatchError(ValueError):
    pass


class EmptyCorpusError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


def token_edit_distance(a, b) -> int:
    """Levenshtein distance at token granularity, unit costs."""
    xs = list(a)
    ys = list(b)
    if len(xs) < len(ys):
        xs, ys = ys, xs
    prev = list(range(len(ys) + 1))
    for i, x in enumerate(xs, start=1):
        cur = [i] + [0] * len(ys)
        for j, y in enumerate(ys, start=1):
            cur[j] = min(
                prev[j] + 1,  # delete
                cur[j - 1] + 1,  # insert
                prev[j - 1] + (x != y),  # substitute
            )
        prev = cur
    return prev[-1]


def parent_accuracy(pred: ParentAnnotation, gold: ParentAnnotation) -> float:
    """Fraction of gold tree positions whose predicted parent matches."""
    if len(pred) != len(gold):
        raise LengthMismatchError(f"annotation lengths differ: {len(pred)} vs {len(gold)}")
    contributing = [i for i, p in enumerate(gold.parents) if p != NO_PARENT]
    if not contributing:
        raise UndefinedMetricError("no gold position has a parent")
    hits = sum(1 for i in contributing if pred.parents[i] == gold.parents[i])
    return hits / len(contributing)


@dataclass
class BucketStats:
    n: int = 0
    exprate: float = 0.0
    le1: float = 0.0
    le2: float = 0.0
    bracket_acc: float = 0.0


@dataclass
class EvalReport:
    """All rates are percentages in [0, 100]. Buckets are keyed by the
    reference expression's structural complexity, with 5 and above
    merged into "5+"."""

    n: int
    exprate: float
    le1: float
    le2: float
    bracket_accuracy: float
    buckets: dict[str, BucketStats] = field(default_factory=dict)
    parent_accuracy: float | None = None

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "exprate": self.exprate,
            "le1": self.le1,
            "le2": self.le2,
            "bracket_accuracy": self.bracket_accuracy,
            "buckets": {
                k: {
                    "n": b.n,
                    "exprate": b.exprate,
                    "le1": b.le1,
                    "le2": b.le2,
                    "bracket_acc": b.bracket_acc,
                }
                for k, b in self.buckets.items()
            },
        }
        if self.parent_accuracy is not None:
            d["parent_accuracy"] = self.parent_accuracy
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per occupied bucket plus a TOTAL row.

        Fixed schema: complexity,n,exprate,le1,le2,bracket_acc
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["complexity", "n", "exprate", "le1", "le2", "bracket_acc"])
        for key in bucket_order(self.buckets):
            b = self.buckets[key]
            writer.writerow(
                [key, b.n, f"{b.exprate:.2f}", f"{b.le1:.2f}", f"{b.le2:.2f}", f"{b.bracket_acc:.2f}"]
            )
        writer.writerow(
            [
                "TOTAL",
                self.n,
                f"{self.exprate:.2f}",
                f"{self.le1:.2f}",
                f"{self.le2:.2f}",
                f"{self.bracket_accuracy:.2f}",
            ]
        )
        return buf.getvalue()


def bucket_order(buckets: dict[str, BucketStats]) -> list[str]:
    return sorted(buckets, key=lambda k: 5 if k == "5+" else int(k))


def bucket_key(complexity: int) -> str:
    return "5+" if complexity >= 5 else str(complexity)


def evaluate(
    preds: list[TokenSeq],
    refs: list[TokenSeq],
    pred_annotations: list[ParentAnnotation] | None = None,
    gold_annotations: list[ParentAnnotation] | None = None,
) -> EvalReport:
    """Score predictions against references.

    Distances are token-level; bracket accuracy is the percentage of
    predictions whose braces balance; buckets are keyed by the
    reference's complexity, so malformed predictions still land in a
    bucket. Parent accuracy is averaged over pairs where it is defined
    when annotation lists are supplied.
    """
    if len(preds) != len(refs):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(refs)} references")
    if not refs:
        raise EmptyCorpusError("nothing to evaluate")

    per_bucket: dict[str, list[tuple[int, bool]]] = {}
    for pred, ref in zip(preds, refs):
        dist = token_edit_distance(pred.ids, ref.ids)
        balanced = brackets_balanced(pred)
        key = bucket_key(sequence_complexity(ref))
        per_bucket.setdefault(key, []).append((dist, balanced))

    def rates(pairs: list[tuple[int, bool]]) -> tuple[float, float, float, float]:
        n = len(pairs)
        exact = sum(1 for d, _ in pairs if d == 0)
        le1 = sum(1 for d, _ in pairs if d <= 1)
        le2 = sum(1 for d, _ in pairs if d <= 2)
        bal = sum(1 for _, ok in pairs if ok)
        return (100.0 * exact / n, 100.0 * le1 / n, 100.0 * le2 / n, 100.0 * bal / n)

    buckets = {}
    for key, pairs in per_bucket.items():
        ex, l1, l2, br = rates(pairs)
        buckets[key] = BucketStats(len(pairs), ex, l1, l2, br)

    all_pairs = [p for pairs in per_bucket.values() for p in pairs]
    ex, l1, l2, br = rates(all_pairs)

    pacc = None
    if pred_annotations is not None and gold_annotations is not None:
        vals = []
        for pa, ga in zip(pred_annotations, gold_annotations):
            try:
                vals.append(parent_accuracy(pa, ga))
            except UndefinedMetricError:
                continue
        if vals:
            pacc = sum(vals) / len(vals)

    return EvalReport(
        n=len(all_pairs),
        exprate=ex,
        le1=l1,
        le2=l2,
        bracket_accuracy=br,
        buckets=buckets,
        parent_accuracy=pacc,
    )

"""Evaluation metrics: macro P/R/F1, agreement statistics, paired t-test.

Scores from macro_prf and human_agreement are on a 0-100 percent scale; the
kappas are on their usual [-1, 1] scale. A class with no gold and no
predicted examples contributes P=R=F1=0 to the macro average (it is never
excluded), which keeps macro scores comparable across settings where rare
classes drop out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from .errors import InsufficientRatersError, LengthMismatchError, UnknownLabelError

__all__ = [
    "ConfusionMatrix", "MetricsReport", "macro_prf", "cohen_kappa",
    "fleiss_kappa", "fleiss_kappa_by_group", "human_agreement", "paired_t_test",
]


def _category_ids(categories) -> list[str]:
    return [c if isinstance(c, str) else c.id for c in categories]


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray  # (C, C) int64, rows = gold, cols = predicted

    @classmethod
    def from_pairs(cls, golds, preds, categories) -> "ConfusionMatrix":
        labels = _category_ids(categories)
        if len(golds) != len(preds):
            raise LengthMismatchError(f"{len(golds)} golds vs {len(preds)} preds")
        if not golds:
            raise LengthMismatchError("empty input")
        index = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for g, p in zip(golds, preds):
            if g not in index:
                raise UnknownLabelError(f"gold label {g!r} not in category set")
            if p not in index:
                raise UnknownLabelError(f"predicted label {p!r} not in category set")
            counts[index[g], index[p]] += 1
        return cls(labels, counts)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("gold\\pred," + ",".join(self.labels) + "\n")
            for lab, row in zip(self.labels, self.counts):
                fh.write(lab + "," + ",".join(str(v) for v in row) + "\n")


@dataclass
class MetricsReport:
    per_class: dict[str, dict]          # id -> {precision, recall, f1, support}
    macro_precision: float
    macro_recall: float
    macro_f1: float
    setting: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "macro_precision": round(self.macro_precision, 2),
            "macro_recall": round(self.macro_recall, 2),
            "macro_f1": round(self.macro_f1, 2),
            "per_class": {
                k: {m: (round(v, 2) if isinstance(v, float) else v)
                    for m, v in row.items()}
                for k, row in self.per_class.items()
            },
            "setting": self.setting,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def per_class_f1_vector(self) -> list[float]:
        return [row["f1"] for row in self.per_class.values()]


def macro_prf(golds, preds, categories, setting: dict | None = None) -> MetricsReport:
    """Per-class and unweighted-mean precision/recall/F1, in percent.

    The macro average runs over ALL categories in the set, including ones
    with zero support.
    """
    cm = ConfusionMatrix.from_pairs(golds, preds, categories)
    per_class = {}
    for i, lab in enumerate(cm.labels):
        tp = int(cm.counts[i, i])
        fp = int(cm.counts[:, i].sum()) - tp
        fn = int(cm.counts[i, :].sum()) - tp
        precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[lab] = {"precision": precision, "recall": recall, "f1": f1,
                          "support": tp + fn}
    macro = {
        m: sum(row[m] for row in per_class.values()) / len(per_class)
        for m in ("precision", "recall", "f1")
    }
    return MetricsReport(per_class, macro["precision"], macro["recall"], macro["f1"],
                         setting or {})


def cohen_kappa(annotations_a, annotations_b) -> float:
    """Two-rater chance-corrected agreement, (p0 - pe) / (1 - pe)."""
    if len(annotations_a) != len(annotations_b):
        raise LengthMismatchError(
            f"{len(annotations_a)} vs {len(annotations_b)} annotations")
    if not annotations_a:
        raise LengthMismatchError("empty input")
    n = len(annotations_a)
    p0 = sum(a == b for a, b in zip(annotations_a, annotations_b)) / n
    labels = sorted(set(annotations_a) | set(annotations_b))
    pe = 0.0
    for lab in labels:
        pa = sum(a == lab for a in annotations_a) / n
        pb = sum(b == lab for b in annotations_b) / n
        pe += pa * pb
    if pe == 1.0:
        return 1.0  # both marginals degenerate; agreement is total
    return (p0 - pe) / (1.0 - pe)


def _fleiss_uniform(table: np.ndarray) -> float:
    """Fleiss kappa for items with a uniform rater count."""
    n_raters = int(table[0].sum())
    p_item = (np.square(table).sum(axis=1) - n_raters) / (n_raters * (n_raters - 1))
    p_bar = float(p_item.mean())
    p_cat = table.sum(axis=0) / table.sum()
    pe = float(np.square(p_cat).sum())
    if pe == 1.0:
        return 1.0
    return (p_bar - pe) / (1.0 - pe)


def fleiss_kappa_by_group(items) -> dict[int, tuple[float, int]]:
    """Group items by rater count and compute Fleiss kappa per group.

    `items` is a sequence of per-item category-count vectors (all the same
    category arity). Returns {rater_count: (kappa, item_count)}.
    """
    table = np.asarray(list(items), dtype=np.int64)
    if table.ndim != 2 or table.shape[0] == 0:
        raise LengthMismatchError("items must be a non-empty 2-D count table")
    raters = table.sum(axis=1)
    if (raters < 2).any():
        raise InsufficientRatersError("every item needs at least 2 ratings")
    groups = {}
    for n in sorted(set(int(r) for r in raters)):
        sub = table[raters == n]
        groups[n] = (_fleiss_uniform(sub), int(sub.shape[0]))
    return groups


def fleiss_kappa(items) -> float:
    """Fleiss kappa; with mixed rater counts, the per-group kappas are
    combined by item-count weights."""
    groups = fleiss_kappa_by_group(items)
    total = sum(count for _, count in groups.values())
    return sum(kappa * count for kappa, count in groups.values()) / total


def human_agreement(annotations_a, annotations_b, categories) -> MetricsReport:
    """Mean of macro_prf in both gold/pred directions (symmetric by
    construction)."""
    fwd = macro_prf(annotations_a, annotations_b, categories)
    rev = macro_prf(annotations_b, annotations_a, categories)
    per_class = {}
    for lab in fwd.per_class:
        per_class[lab] = {
            m: (fwd.per_class[lab][m] + rev.per_class[lab][m]) / 2
            for m in ("precision", "recall", "f1", "support")
        }
    return MetricsReport(
        per_class,
        (fwd.macro_precision + rev.macro_precision) / 2,
        (fwd.macro_recall + rev.macro_recall) / 2,
        (fwd.macro_f1 + rev.macro_f1) / 2,
        {"kind": "human_agreement"},
    )


def paired_t_test(scores_a, scores_b) -> tuple[float, float]:
    """Two-sided paired t-test.

    Zero-variance differences short-circuit: p=1 when the vectors are
    identical, p=0 when they differ by a nonzero constant.
    """
    if len(scores_a) != len(scores_b):
        raise LengthMismatchError(f"{len(scores_a)} vs {len(scores_b)} scores")
    n = len(scores_a)
    if n < 2:
        raise LengthMismatchError("need at least 2 paired samples")
    diffs = np.asarray(scores_a, dtype=np.float64) - np.asarray(scores_b, dtype=np.float64)
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(_scipy_stats.t.sf(abs(t), df=n - 1))
    return t, p

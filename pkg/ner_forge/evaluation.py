"""Entity-level scoring, conlleval style.

A predicted entity counts only if start, end and type all match a gold
entity; a boundary error is one false positive plus one false negative.
Counts are pooled over sentences and types (micro average) and O tokens
never contribute.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Set, Tuple

import pandas as pd

from ner_forge.corpus import OUTSIDE, Dataset, TagScheme, extract_spans, split_tag
from ner_forge.errors import DataError

TOTAL = "TOTAL"
CSV_COLUMNS = ["type", "tp", "fp", "fn", "precision", "recall", "f1"]


def calc_metrics(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    """Precision, recall, F1 with 0 for empty denominators."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class TypeScores:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return calc_metrics(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return calc_metrics(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self) -> float:
        return calc_metrics(self.tp, self.fp, self.fn)[2]


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    per_type: Dict[str, TypeScores] = field(default_factory=dict)
    token_accuracy: float = 0.0

    @property
    def precision(self) -> float:
        return calc_metrics(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return calc_metrics(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self) -> float:
        return calc_metrics(self.tp, self.fp, self.fn)[2]

    def to_frame(self) -> pd.DataFrame:
        """One row per entity type plus TOTAL; P/R/F1 as percentages."""
        rows = []
        for etype, scores in sorted(self.per_type.items()):
            rows.append([etype, scores.tp, scores.fp, scores.fn, scores.precision, scores.recall, scores.f1])
        rows.append([TOTAL, self.tp, self.fp, self.fn, self.precision, self.recall, self.f1])
        frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
        frame[["precision", "recall", "f1"]] *= 100
        return frame


def _gold_tags(gold) -> List[List[str]]:
    if isinstance(gold, Dataset):
        return [s.tags for s in gold.converted(TagScheme.BIO)]
    return [list(tags) for tags in gold]


def _check_alignment(gold: List[List[str]], predicted: Sequence[Sequence[str]]) -> None:
    if len(gold) != len(predicted):
        raise DataError(f"{len(gold)} gold sentences but {len(predicted)} predictions")
    for i, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise DataError(f"sentence {i}: {len(g)} gold tags but {len(p)} predicted")


def _token_accuracy(gold: List[List[str]], predicted: Sequence[Sequence[str]]) -> float:
    total = sum(len(g) for g in gold)
    correct = sum(a == b for g, p in zip(gold, predicted) for a, b in zip(g, p))
    return correct / total if total else 0.0


def _report(counts: Dict[str, Counter], gold, predicted) -> EvalReport:
    per_type = {etype: TypeScores(c["tp"], c["fp"], c["fn"]) for etype, c in counts.items()}
    return EvalReport(
        tp=sum(s.tp for s in per_type.values()),
        fp=sum(s.fp for s in per_type.values()),
        fn=sum(s.fn for s in per_type.values()),
        per_type=per_type,
        token_accuracy=_token_accuracy(gold, predicted),
    )


def evaluate(gold, predicted: Sequence[Sequence[str]]) -> EvalReport:
    """Score predicted BIO sequences against a gold Dataset (or tag lists)."""
    gold_tags = _gold_tags(gold)
    _check_alignment(gold_tags, predicted)
    counts: Dict[str, Counter] = {}
    for g, p in zip(gold_tags, predicted):
        gold_spans = set(extract_spans(g))
        pred_spans = set(extract_spans(p))
        for span in gold_spans | pred_spans:
            c = counts.setdefault(span.etype, Counter())
            if span in gold_spans and span in pred_spans:
                c["tp"] += 1
            elif span in pred_spans:
                c["fp"] += 1
            else:
                c["fn"] += 1
    return _report(counts, gold_tags, predicted)


def _is_entity(tags: Sequence[str], start: int, end: int, etype: str) -> bool:
    # conlleval reading of BIO: a chunk opens on B-X or on an I-X that does
    # not continue X, continues over I-X, and stops before anything else
    def opens(i):
        if tags[i] == f"B-{etype}":
            return True
        return tags[i] == f"I-{etype}" and (i == 0 or tags[i - 1] not in (f"B-{etype}", f"I-{etype}"))

    if not opens(start):
        return False
    if any(tags[i] != f"I-{etype}" for i in range(start + 1, end + 1)):
        return False
    return end + 1 == len(tags) or tags[end + 1] != f"I-{etype}"


def _types_in(tags: Sequence[str]) -> Set[str]:
    return {split_tag(t)[1] for t in tags if t != OUTSIDE}


def evaluate_oracle(gold, predicted: Sequence[Sequence[str]]) -> EvalReport:
    """Brute-force twin of :func:`evaluate` that tests every (start, end, type)."""
    gold_tags = _gold_tags(gold)
    _check_alignment(gold_tags, predicted)
    counts: Dict[str, Counter] = {}
    for g, p in zip(gold_tags, predicted):
        n = len(g)
        for etype in sorted(_types_in(g) | _types_in(p)):
            for start in range(n):
                for end in range(start, n):
                    in_gold = _is_entity(g, start, end, etype)
                    in_pred = _is_entity(p, start, end, etype)
                    if not (in_gold or in_pred):
                        continue
                    c = counts.setdefault(etype, Counter())
                    if in_gold and in_pred:
                        c["tp"] += 1
                    elif in_pred:
                        c["fp"] += 1
                    else:
                        c["fn"] += 1
    return _report(counts, gold_tags, predicted)


def token_scores(gold, predicted: Sequence[Sequence[str]]) -> TypeScores:
    """Token-level micro scores over non-O tags."""
    gold_tags = _gold_tags(gold)
    _check_alignment(gold_tags, predicted)
    tp = fp = fn = 0
    for g, p in zip(gold_tags, predicted):
        for a, b in zip(g, p):
            if a == b:
                tp += a != OUTSIDE
                continue
            fp += b != OUTSIDE
            fn += a != OUTSIDE
    return TypeScores(tp, fp, fn)


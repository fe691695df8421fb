"""Span-level micro-averaged precision/recall/F1 with conlleval semantics.

A predicted span counts as a true positive only when a gold span matches it
exactly in (start, end, type).  Counts are pooled over all sentences before
ratios are taken (micro-averaging); zero denominators yield 0, matching
conlleval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Corpus, TagSequence, extract_spans
from .crf import CrfModel, decode
from .transforms import CaseVariant, make_variant, to_lower
from .truecase import Truecaser, truecase


@dataclass(frozen=True)
class Metrics:
    """Pooled span counts and the derived ratios, plus per-type breakdowns."""

    true_positives: int
    predicted_count: int
    gold_count: int
    precision: float
    recall: float
    f1: float
    per_type: Mapping[str, "Metrics"] = field(default_factory=dict)

    @classmethod
    def from_counts(
        cls,
        true_positives: int,
        predicted_count: int,
        gold_count: int,
        per_type: Mapping[str, "Metrics"] | None = None,
    ) -> "Metrics":
        precision = true_positives / predicted_count if predicted_count else 0.0
        recall = true_positives / gold_count if gold_count else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        return cls(
            true_positives,
            predicted_count,
            gold_count,
            precision,
            recall,
            f1,
            dict(per_type or {}),
        )


def evaluate(
    predicted: Sequence[TagSequence], gold: Sequence[TagSequence]
) -> Metrics:
    """Micro-averaged span metrics of `predicted` against `gold`."""
    if len(predicted) != len(gold):
        raise ValueError(
            f"{len(predicted)} predicted sentences vs {len(gold)} gold"
        )
    tp = pred_n = gold_n = 0
    type_counts: dict[str, list[int]] = {}
    for idx, (pred_seq, gold_seq) in enumerate(zip(predicted, gold)):
        if len(pred_seq) != len(gold_seq):
            raise ValueError(
                f"sentence {idx}: predicted length {len(pred_seq)} "
                f"!= gold length {len(gold_seq)}"
            )
        pred_spans = set(extract_spans(pred_seq))
        gold_spans = set(extract_spans(gold_seq))
        tp += len(pred_spans & gold_spans)
        pred_n += len(pred_spans)
        gold_n += len(gold_spans)
        for span in pred_spans | gold_spans:
            counts = type_counts.setdefault(span.entity_type, [0, 0, 0])
            if span in pred_spans and span in gold_spans:
                counts[0] += 1
            if span in pred_spans:
                counts[1] += 1
            if span in gold_spans:
                counts[2] += 1
    per_type = {
        etype: Metrics.from_counts(*counts)
        for etype, counts in sorted(type_counts.items())
    }
    return Metrics.from_counts(tp, pred_n, gold_n, per_type)


def robustness_grid(
    model: CrfModel,
    test: Corpus,
    *,
    truecaser: Truecaser | None = None,
    caseless: bool = False,
) -> dict[CaseVariant, Metrics]:
    """Decode and score the test corpus under all three case variants.

    `truecaser` applies truecasing before decoding; `caseless` lowercases
    instead (at most one may be given).  Gold annotations are unaffected by
    the variants, so every cell scores against the same spans.
    """
    if truecaser is not None and caseless:
        raise ValueError("choose either truecasing or caseless preprocessing")
    grid: dict[CaseVariant, Metrics] = {}
    for variant in CaseVariant:
        corpus = make_variant(test, variant)
        predictions = []
        for ann in corpus:
            sentence = ann.sentence
            if caseless:
                sentence = to_lower(sentence)
            elif truecaser is not None:
                sentence = truecase(truecaser, sentence)
            predictions.append(decode(model, sentence))
        grid[variant] = evaluate(predictions, [ann.gold for ann in corpus])
    return grid


def metrics_lines(metrics: Metrics, prefix: str = "") -> list[str]:
    """Key-value lines for the machine-readable report."""
    lines = [
        f"{prefix}tp={metrics.true_positives}",
        f"{prefix}predicted={metrics.predicted_count}",
        f"{prefix}gold={metrics.gold_count}",
        f"{prefix}precision={metrics.precision!r}",
        f"{prefix}recall={metrics.recall!r}",
        f"{prefix}f1={metrics.f1!r}",
    ]
    for etype, sub in sorted(metrics.per_type.items()):
        lines.extend(metrics_lines(sub, f"{prefix}type.{etype}."))
    return lines

"""Headword-match scoring against gold tuples, precision-recall curves over
confidence-ranked extractions, area under the curve, and best F1."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from oiekit.core import (
    Extraction,
    OiekitError,
    ParsedSentence,
    PREDICATE_ROLE,
    TaggedInstance,
    span_head,
    spans_from_tags,
)
from oiekit.corpus_io import GoldTuple
from oiekit.reward import SemScorer, semantic_confidence


class EmptyGold(OiekitError):
    """Evaluation requested against an empty gold set."""


@dataclass(frozen=True)
class MatchDecision:
    sentence_id: str
    predicate_span: tuple[int, int]
    confidence: float
    matched: bool
    gold_predicate_head: Optional[int] = None


@dataclass(frozen=True)
class EvalReport:
    pr_points: tuple[tuple[float, float], ...]
    auc: float
    best_f1: float
    decisions: tuple[MatchDecision, ...]
    num_gold: int
    num_predictions: int


def match(pred: Extraction, gold: GoldTuple,
          sentence: Optional[ParsedSentence] = None) -> bool:
    """Headword criterion: the predicate span contains the gold predicate
    head and, for every gold role head, the predicted span for that role
    exists and contains it. Extra predicted roles are ignored."""
    if pred.sentence_id != gold.sentence_id:
        return False
    start, end = pred.predicate_span
    if not start <= gold.predicate_head <= end:
        return False
    for role, head in gold.role_heads.items():
        if role not in pred.role_spans:
            return False
        span_start, span_end = pred.role_spans[role]
        if not span_start <= head <= span_end:
            return False
    return True


def lexical_overlap_match(pred: Extraction, gold: GoldTuple,
                          sentence: ParsedSentence, threshold: float = 0.5) -> bool:
    """Lenient diagnostic matcher: per-role token overlap with the gold
    surface strings must reach ``threshold``. Not used for acceptance."""
    if pred.sentence_id != gold.sentence_id:
        return False
    spans = dict(pred.role_spans)
    spans[PREDICATE_ROLE] = pred.predicate_span
    for role, surface in gold.surfaces.items():
        gold_tokens = surface.split()
        if not gold_tokens:
            continue
        if role not in spans:
            return False
        start, end = spans[role]
        pred_tokens = [sentence.token(i).surface for i in range(start, end + 1)]
        shared = len(set(gold_tokens) & set(pred_tokens))
        if shared / len(gold_tokens) < threshold:
            return False
    return True


def _sorted_predictions(extractions: Sequence[Extraction]) -> list[Extraction]:
    return sorted(
        extractions,
        key=lambda e: (-e.confidence, e.sentence_id, e.predicate_span, sorted(e.role_spans.items())),
    )


def assign_matches(extractions: Sequence[Extraction], gold: Sequence[GoldTuple],
                   matcher=match) -> tuple[list[Extraction], list[MatchDecision]]:
    """Greedy one-to-one assignment by descending confidence.

    Each prediction may consume at most one still-unmatched gold tuple from
    its sentence; returns predictions in assignment order plus decisions.
    """
    by_sentence: dict[str, list[int]] = {}
    for idx, g in enumerate(gold):
        by_sentence.setdefault(g.sentence_id, []).append(idx)
    taken = [False] * len(gold)
    ordered = _sorted_predictions(extractions)
    decisions = []
    for pred in ordered:
        matched_idx = None
        for idx in by_sentence.get(pred.sentence_id, ()):
            if not taken[idx] and matcher(pred, gold[idx]):
                matched_idx = idx
                break
        if matched_idx is not None:
            taken[matched_idx] = True
        decisions.append(MatchDecision(
            sentence_id=pred.sentence_id,
            predicate_span=pred.predicate_span,
            confidence=pred.confidence,
            matched=matched_idx is not None,
            gold_predicate_head=gold[matched_idx].predicate_head if matched_idx is not None else None,
        ))
    return ordered, decisions


def pr_curve(extractions: Sequence[Extraction], gold: Sequence[GoldTuple],
             matcher=match) -> list[tuple[float, float]]:
    """(recall, precision) at every distinct confidence threshold, swept
    from the highest threshold down."""
    if not gold:
        raise EmptyGold("cannot sweep a precision-recall curve without gold tuples")
    ordered, decisions = assign_matches(extractions, gold, matcher)
    points = []
    true_positives = 0
    total = 0
    for i, decision in enumerate(decisions):
        true_positives += decision.matched
        total += 1
        is_last_at_threshold = (
            i + 1 == len(decisions) or decisions[i + 1].confidence != decision.confidence
        )
        if is_last_at_threshold:
            points.append((true_positives / len(gold), true_positives / total))
    return points


def auc(pr_points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area over recall. The lowest-recall point's precision is
    extended flat back to recall zero; the result lives in [0, 1]."""
    if not pr_points:
        return 0.0
    points = list(pr_points)
    first_recall, first_precision = points[0]
    area = first_recall * first_precision
    for (r_prev, p_prev), (r_next, p_next) in zip(points, points[1:]):
        area += (r_next - r_prev) * (p_prev + p_next) / 2.0
    return area


def best_f1(pr_points: Sequence[tuple[float, float]]) -> float:
    best = 0.0
    for recall, precision in pr_points:
        if precision + recall > 0:
            best = max(best, 2 * precision * recall / (precision + recall))
    return best


def tuple_f1(extractions: Sequence[Extraction], gold: Sequence[GoldTuple],
             matcher=match) -> float:
    """F1 of the full prediction set (no threshold sweep)."""
    if not gold:
        raise EmptyGold("cannot compute F1 without gold tuples")
    if not extractions:
        return 0.0
    _, decisions = assign_matches(extractions, gold, matcher)
    true_positives = sum(d.matched for d in decisions)
    precision = true_positives / len(decisions)
    recall = true_positives / len(gold)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def evaluate(extractions: Sequence[Extraction], gold: Sequence[GoldTuple],
             matcher=match) -> EvalReport:
    if not gold:
        raise EmptyGold("cannot evaluate without gold tuples")
    _, decisions = assign_matches(extractions, gold, matcher)
    points = pr_curve(extractions, gold, matcher) if extractions else []
    return EvalReport(
        pr_points=tuple(points),
        auc=auc(points),
        best_f1=best_f1(points),
        decisions=tuple(decisions),
        num_gold=len(gold),
        num_predictions=len(extractions),
    )


def rerank(extractions: Sequence[Extraction],
           sentences: Mapping[str, ParsedSentence],
           scorer: SemScorer, mode: str = "combined") -> list[Extraction]:
    """Replace confidences for the three ranking variants: ``avg-log-only``
    keeps the input confidence, ``sem-only`` uses log semantic score, and
    ``combined`` adds log semantic score to the input confidence."""
    if mode not in ("avg-log-only", "sem-only", "combined"):
        raise OiekitError(f"unknown rerank mode {mode!r}")
    out = []
    for extraction in extractions:
        if mode == "avg-log-only":
            confidence = extraction.confidence
        else:
            sentence = sentences[extraction.sentence_id]
            sem = scorer.score(extraction, sentence)
            if mode == "sem-only":
                confidence = math.log(max(sem, 1e-12))
            else:
                confidence = semantic_confidence(extraction.confidence, sem)
        out.append(Extraction(
            sentence_id=extraction.sentence_id,
            predicate_span=extraction.predicate_span,
            role_spans=extraction.role_spans,
            confidence=confidence,
        ))
    return out


def gold_from_instance(instance: TaggedInstance) -> GoldTuple:
    """Reference tuple implied by a tagged instance: each role span's
    syntactic head (the token whose governor lies outside the span)."""
    extraction = spans_from_tags(instance)
    role_heads = {
        role: span_head(instance.sentence, span)
        for role, span in extraction.role_spans.items()
    }
    return GoldTuple(
        sentence_id=instance.sentence.sentence_id,
        predicate_head=instance.predicate_index,
        role_heads=role_heads,
    )


def write_report(report: EvalReport, path) -> None:
    payload = {
        "auc": report.auc,
        "auc_x100": report.auc * 100.0,
        "best_f1": report.best_f1,
        "best_f1_x100": report.best_f1 * 100.0,
        "num_gold": report.num_gold,
        "num_predictions": report.num_predictions,
        "pr_points": [[r, p] for r, p in report.pr_points],
        "decisions": [
            {
                "sentence_id": d.sentence_id,
                "predicate_span": list(d.predicate_span),
                "confidence": d.confidence,
                "matched": d.matched,
                "gold_predicate_head": d.gold_predicate_head,
            }
            for d in report.decisions
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_pr_points(pr_points: Sequence[tuple[float, float]], path) -> None:
    """Two-column recall/precision file for plotting tools."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("recall\tprecision\n")
        for recall, precision in pr_points:
            handle.write(f"{recall!r}\t{precision!r}\n")

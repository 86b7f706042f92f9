"""Goodness of an extraction: a hard syntactic headword constraint, a soft
semantic consistency score, their product as the training reward, and the
semantic-augmented confidence used for ranking."""

from __future__ import annotations

import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Protocol

import requests

from oiekit.core import (
    ARGUMENT_ROLES,
    Extraction,
    ParsedSentence,
    PREDICATE_ROLE,
    ValidationError,
)
from oiekit.patterns import DEFAULT_TABLE, PatternTable

log = logging.getLogger(__name__)

SEM_FLOOR = 1e-12

# Roles whose presence counts toward the completeness factor of the
# surrogate scorer.
_CORE_ROLES = ("ARG1", PREDICATE_ROLE, "ARG2")


@dataclass(frozen=True)
class RewardBreakdown:
    """Syntactic score (+1/-1), semantic score in [0, 1], and their product."""

    syn: int
    sem: float
    total: float


def combined_reward(syn: int, sem: float) -> RewardBreakdown:
    return RewardBreakdown(syn=syn, sem=sem, total=syn * sem)


def _attachment_targets(sentence: ParsedSentence, verb: int) -> set[int]:
    """The verb plus its chain of conjunction heads.

    Arguments shared across coordinated verbs attach to the first conjunct,
    so a verb deeper in the chain accepts headwords governed by any verb
    above it. The first conjunct never inherits from the verbs below it.
    """
    targets = {verb}
    cur = verb
    while sentence.token(cur).deprel == "conj":
        cur = sentence.token(cur).head
        if cur == 0 or cur in targets:
            break
        targets.add(cur)
    return targets


def syn_score(extraction: Extraction, sentence: ParsedSentence,
              table: PatternTable = DEFAULT_TABLE) -> int:
    """+1 iff the predicate span contains a predicate-POS token v and every
    emitted argument span contains a token attached to v (or to a
    conjunction head of v) via one of its role's relations; -1 otherwise.
    """
    start, end = extraction.predicate_span
    verbs = [i for i in range(start, end + 1) if sentence.token(i).upos in table.predicate_pos]
    for verb in verbs:
        targets = _attachment_targets(sentence, verb)
        ok = True
        for role, (span_start, span_end) in extraction.role_spans.items():
            relations = table.role_patterns.get(role, frozenset())
            found = False
            for idx in range(span_start, span_end + 1):
                tok = sentence.token(idx)
                if tok.deprel in relations and tok.head in targets:
                    found = True
                    break
            if not found:
                ok = False
                break
        if ok:
            return 1
    return -1


def verbalize(extraction: Extraction, sentence: ParsedSentence) -> str:
    """Role-ordered surface form of the tuple: ARG1 P ARG2 ARG3."""
    parts = []
    spans = dict(extraction.role_spans)
    spans[PREDICATE_ROLE] = extraction.predicate_span
    for role in ("ARG1", PREDICATE_ROLE, "ARG2", "ARG3"):
        if role not in spans:
            continue
        start, end = spans[role]
        parts.extend(sentence.token(i).surface for i in range(start, end + 1))
    return " ".join(parts)


def containment(hypothesis_words: list[str], sentence_words: list[str]) -> float:
    """Multiset fraction of hypothesis words present among the sentence
    words; 0.0 for an empty hypothesis."""
    if not hypothesis_words:
        return 0.0
    available = Counter(sentence_words)
    contained = 0
    for word in hypothesis_words:
        if available[word] > 0:
            available[word] -= 1
            contained += 1
    return contained / len(hypothesis_words)


def sem_score_surrogate(extraction: Extraction, sentence: ParsedSentence) -> float:
    """Deterministic entailment stand-in: containment x completeness.

    Containment is the multiset fraction of verbalized-tuple tokens present
    in the sentence; completeness is the filled fraction of the core roles
    (ARG1, P, ARG2).
    """
    hypothesis = verbalize(extraction, sentence).split()
    filled = sum(
        1 for role in _CORE_ROLES
        if role == PREDICATE_ROLE or role in extraction.role_spans
    )
    completeness = filled / len(_CORE_ROLES)
    return containment(hypothesis, [tok.surface for tok in sentence.tokens]) * completeness


def semantic_confidence(c: float, sem: float) -> float:
    """Ranking confidence: average-log confidence plus log semantic score
    (the semantic score is floored to avoid -inf)."""
    return c + math.log(max(sem, SEM_FLOOR))


# ---------------------------------------------------------------------------
# Pluggable entailment scorers
# ---------------------------------------------------------------------------


class EntailmentScorer(Protocol):
    """Contract for external scorers: probability in [0, 1] that the
    premise entails the hypothesis, deterministic per pair."""

    def score(self, premise: str, hypothesis: str) -> float: ...


class HttpEntailmentAdapter:
    """Entailment scorer backed by an HTTP service.

    POSTs ``{"premise": ..., "hypothesis": ...}`` as JSON and expects
    ``{"score": p}`` back.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def score(self, premise: str, hypothesis: str) -> float:
        response = requests.post(
            self.endpoint,
            json={"premise": premise, "hypothesis": hypothesis},
            timeout=self.timeout,
        )
        response.raise_for_status()
        value = float(response.json()["score"])
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"adapter returned score {value} outside [0, 1]")
        return value


class SemScorer:
    """Semantic-consistency scorer for extractions.

    Mode ``surrogate`` uses the deterministic containment x completeness
    formula; mode ``adapter`` verbalizes the tuple and asks an external
    :class:`EntailmentScorer`, caching results by (sentence id,
    verbalized tuple). The cache persists as a tab-separated file.
    """

    def __init__(self, mode: str = "surrogate",
                 adapter: Optional[EntailmentScorer] = None,
                 cache_path=None):
        if mode not in ("surrogate", "adapter"):
            raise ValidationError(f"unknown scorer mode {mode!r}")
        if mode == "adapter" and adapter is None:
            raise ValidationError("adapter mode requires an EntailmentScorer")
        self.mode = mode
        self.adapter = adapter
        self.cache_path = cache_path
        self._cache: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()
        if cache_path is not None:
            self._load_cache()

    def _load_cache(self):
        try:
            with open(self.cache_path, "r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    sid, hypothesis, value = line.split("\t")
                    self._cache[(sid, hypothesis)] = float(value)
        except FileNotFoundError:
            pass

    def save_cache(self):
        if self.cache_path is None:
            return
        with self._lock, open(self.cache_path, "w", encoding="utf-8") as handle:
            for (sid, hypothesis), value in sorted(self._cache.items()):
                handle.write(f"{sid}\t{hypothesis}\t{value!r}\n")

    def score(self, extraction: Extraction, sentence: ParsedSentence) -> float:
        if self.mode == "surrogate":
            return sem_score_surrogate(extraction, sentence)
        hypothesis = verbalize(extraction, sentence)
        key = (sentence.sentence_id, hypothesis)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = self.adapter.score(sentence.text, hypothesis)
        with self._lock:
            self._cache[key] = value
        return value


def make_sem_scorer(spec: str, cache_path=None) -> SemScorer:
    """Build a scorer from a CLI-style spec: ``surrogate`` or
    ``adapter:<endpoint-url>``."""
    if spec == "surrogate":
        return SemScorer(mode="surrogate")
    if spec.startswith("adapter:"):
        endpoint = spec[len("adapter:"):]
        if not endpoint:
            raise ValidationError("adapter scorer needs an endpoint, e.g. adapter:http://host/score")
        return SemScorer(mode="adapter", adapter=HttpEntailmentAdapter(endpoint),
                         cache_path=cache_path)
    raise ValidationError(f"unknown scorer spec {spec!r}")


def score_extraction(extraction: Extraction, sentence: ParsedSentence,
                     scorer: SemScorer, table: PatternTable = DEFAULT_TABLE) -> RewardBreakdown:
    """Full reward for one extraction."""
    syn = syn_score(extraction, sentence, table)
    sem = scorer.score(extraction, sentence)
    return combined_reward(syn, sem)

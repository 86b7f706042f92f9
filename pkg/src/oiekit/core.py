"""Shared data model: dependency-parsed sentences, BIO tag sequences over
predicate/argument roles, extracted tuples, and the conversions between tag
sequences and spans.

All types are immutable values; every operation here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

PREDICATE_ROLE = "P"
ARGUMENT_ROLES = ("ARG1", "ARG2", "ARG3")
DEFAULT_ROLES = (PREDICATE_ROLE,) + ARGUMENT_ROLES
OUTSIDE = "O"

Span = tuple[int, int]


class OiekitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(OiekitError):
    """A value violates one of its type invariants."""


class NonTreeParse(OiekitError):
    """The head graph of a sentence is not a single-rooted tree."""


class NoPredicateSpan(OiekitError):
    """A tag sequence contains no predicate labels."""


class SpanOutOfBounds(OiekitError):
    """A span is inverted, non-positive, or outside the sentence."""


def bio_labels(roles: Sequence[str] = DEFAULT_ROLES) -> tuple[str, ...]:
    """Label inventory for a role set: O first, then B-/I- per role."""
    labels = [OUTSIDE]
    for role in roles:
        labels.append(f"B-{role}")
        labels.append(f"I-{role}")
    return tuple(labels)


DEFAULT_LABELS = bio_labels()


def label_role(label: str) -> Optional[str]:
    """Role named by a B-/I- label, None for O."""
    if label == OUTSIDE:
        return None
    return label[2:]


@dataclass(frozen=True)
class Token:
    """One token of a dependency-parsed sentence.

    ``index`` is 1-based; ``head`` is the 1-based index of the governing
    token, with 0 marking the root.
    """

    index: int
    surface: str
    upos: str
    head: int
    deprel: str

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"token index must be >= 1, got {self.index}")
        if self.head < 0:
            raise ValidationError(f"token head must be >= 0, got {self.head}")
        if self.head == self.index:
            raise ValidationError(f"token {self.index} is its own head")


@dataclass(frozen=True)
class ParsedSentence:
    sentence_id: str
    tokens: tuple[Token, ...]
    text: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise ValidationError(f"sentence {self.sentence_id!r} has no tokens")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        m = len(self.tokens)
        for pos, tok in enumerate(self.tokens, start=1):
            if tok.index != pos:
                raise ValidationError(
                    f"sentence {self.sentence_id!r}: token index {tok.index} "
                    f"at position {pos} (indices must be 1..{m} in order)"
                )
            if tok.head > m:
                raise ValidationError(
                    f"sentence {self.sentence_id!r}: token {tok.index} has "
                    f"head {tok.head} beyond sentence length {m}"
                )
        self._check_tree()
        if not self.text:
            object.__setattr__(self, "text", " ".join(t.surface for t in self.tokens))

    def _check_tree(self):
        roots = [t.index for t in self.tokens if t.head == 0]
        if len(roots) != 1:
            raise NonTreeParse(
                f"sentence {self.sentence_id!r}: expected exactly one root, "
                f"found {len(roots)}"
            )
        for tok in self.tokens:
            seen = set()
            cur = tok.index
            while cur != 0:
                if cur in seen:
                    raise NonTreeParse(
                        f"sentence {self.sentence_id!r}: cycle through token {cur}"
                    )
                seen.add(cur)
                cur = self.tokens[cur - 1].head

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]

    @cached_property
    def _children(self) -> dict[int, tuple[int, ...]]:
        kids: dict[int, list[int]] = {}
        for tok in self.tokens:
            kids.setdefault(tok.head, []).append(tok.index)
        return {h: tuple(c) for h, c in kids.items()}

    def children_of(self, index: int) -> tuple[int, ...]:
        """Indices of direct dependents of ``index``, in surface order."""
        return self._children.get(index, ())

    def subtree(self, index: int) -> tuple[int, ...]:
        """All indices in the dependency subtree rooted at ``index``, sorted."""
        out = []
        stack = [index]
        while stack:
            cur = stack.pop()
            out.append(cur)
            stack.extend(self.children_of(cur))
        return tuple(sorted(out))


@dataclass(frozen=True)
class TagSequence:
    """A BIO label sequence, optionally with its model log probability."""

    labels: tuple[str, ...]
    log_prob: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TaggedInstance:
    """A sentence, a predicate position, and the tags for that predicate."""

    sentence: ParsedSentence
    predicate_index: int
    tags: TagSequence

    def __post_init__(self):
        m = len(self.sentence)
        if len(self.tags) != m:
            raise ValidationError(
                f"instance for {self.sentence.sentence_id!r}: {len(self.tags)} "
                f"tags for {m} tokens"
            )
        if not 1 <= self.predicate_index <= m:
            raise ValidationError(
                f"predicate index {self.predicate_index} outside sentence "
                f"{self.sentence.sentence_id!r}"
            )
        has_p = any(label_role(lab) == PREDICATE_ROLE for lab in self.tags.labels)
        if has_p and label_role(self.tags.labels[self.predicate_index - 1]) != PREDICATE_ROLE:
            raise ValidationError(
                f"instance for {self.sentence.sentence_id!r}: predicate span "
                f"does not cover predicate index {self.predicate_index}"
            )


@dataclass(frozen=True)
class Extraction:
    """A predicate span plus role-labelled argument spans with a confidence."""

    sentence_id: str
    predicate_span: Span
    role_spans: Mapping[str, Span]
    confidence: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "role_spans", dict(self.role_spans))
        spans = [("P", self.predicate_span)] + sorted(self.role_spans.items())
        for role, (start, end) in spans:
            if start < 1 or end < start:
                raise SpanOutOfBounds(f"{role} span [{start}, {end}] is invalid")
        for i, (role_a, span_a) in enumerate(spans):
            for role_b, span_b in spans[i + 1 :]:
                if span_a[0] <= span_b[1] and span_b[0] <= span_a[1]:
                    raise ValidationError(
                        f"{role_a} span {span_a} overlaps {role_b} span {span_b}"
                    )


def validate_bio(tags: TagSequence | Sequence[str]) -> list[str]:
    """Diagnose BIO violations; an empty list means the sequence is well formed.

    Checks: every label is known-shaped, every I-X continues a B-X/I-X run,
    and at most one P span exists.
    """
    labels = tags.labels if isinstance(tags, TagSequence) else tuple(tags)
    problems = []
    p_spans = 0
    prev = OUTSIDE
    for pos, lab in enumerate(labels, start=1):
        if lab != OUTSIDE and (len(lab) < 3 or lab[1] != "-" or lab[0] not in "BI"):
            problems.append(f"position {pos}: unknown label {lab!r}")
            prev = OUTSIDE
            continue
        if lab.startswith("I-"):
            role = label_role(lab)
            if label_role(prev) != role:
                problems.append(f"position {pos}: {lab} without preceding B-{role}")
        if lab == f"B-{PREDICATE_ROLE}":
            p_spans += 1
        prev = lab
    if p_spans > 1:
        problems.append(f"{p_spans} predicate spans (at most one allowed)")
    return problems


def _runs(labels: Sequence[str]) -> list[tuple[str, Span]]:
    """Maximal (role, span) runs in order of appearance."""
    runs = []
    pos = 1
    n = len(labels)
    while pos <= n:
        role = label_role(labels[pos - 1])
        if role is None or not labels[pos - 1].startswith("B-"):
            pos += 1
            continue
        end = pos
        while end + 1 <= n and labels[end] == f"I-{role}":
            end += 1
        runs.append((role, (pos, end)))
        pos = end + 1
    return runs


def _distance_to_span(start: int, span: Span) -> int:
    if start < span[0]:
        return span[0] - start
    if start > span[1]:
        return start - span[1]
    return 0


def spans_from_tags(instance: TaggedInstance, confidence: float = 0.0) -> Extraction:
    """Turn a tagged instance into an extraction.

    Each maximal B-X/I-X run becomes one span. When several runs share a
    role, the run whose start is nearest the predicate span wins (earlier
    run on ties); the rest are dropped.
    """
    problems = validate_bio(instance.tags)
    if problems:
        raise ValidationError("; ".join(problems))
    runs = _runs(instance.tags.labels)
    predicate_span = None
    by_role: dict[str, list[Span]] = {}
    for role, span in runs:
        if role == PREDICATE_ROLE:
            predicate_span = span
        else:
            by_role.setdefault(role, []).append(span)
    if predicate_span is None:
        raise NoPredicateSpan(
            f"no predicate labels for {instance.sentence.sentence_id!r}"
        )
    role_spans = {}
    for role, spans in by_role.items():
        best = min(spans, key=lambda s: (_distance_to_span(s[0], predicate_span), s[0]))
        role_spans[role] = best
    return Extraction(
        sentence_id=instance.sentence.sentence_id,
        predicate_span=predicate_span,
        role_spans=role_spans,
        confidence=confidence,
    )


def tags_from_spans(extraction: Extraction, m: int) -> TagSequence:
    """Inverse of :func:`spans_from_tags` for a sentence of length ``m``."""
    labels = [OUTSIDE] * m
    items = [(PREDICATE_ROLE, extraction.predicate_span)]
    items += sorted(extraction.role_spans.items())
    for role, (start, end) in items:
        if start < 1 or end > m or end < start:
            raise SpanOutOfBounds(
                f"{role} span [{start}, {end}] outside sentence of length {m}"
            )
        labels[start - 1] = f"B-{role}"
        for pos in range(start + 1, end + 1):
            labels[pos - 1] = f"I-{role}"
    return TagSequence(tuple(labels))


def span_head(sentence: ParsedSentence, span: Span) -> int:
    """Index of the first token in ``span`` whose head lies outside it.

    For a span covering a dependency subtree this is the subtree root.
    """
    start, end = span
    for idx in range(start, end + 1):
        head = sentence.token(idx).head
        if head == 0 or head < start or head > end:
            return idx
    return start

"""Dependency-pattern labelling functions: detect predicates by POS,
match argument headwords through predicate-to-child relations, expand
heads to phrase spans, and emit noisy BIO training instances."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from oiekit.core import (
    ARGUMENT_ROLES,
    OUTSIDE,
    ParsedSentence,
    Span,
    TaggedInstance,
    TagSequence,
    ValidationError,
)

# Dependents with these relations are auxiliaries, not content predicates.
AUX_DEPRELS = frozenset({"aux", "auxpass", "aux:pass", "cop"})

# Both classic Stanford and Universal Dependencies relation spellings.
DEFAULT_ROLE_PATTERNS: Mapping[str, frozenset[str]] = {
    "ARG1": frozenset({"nsubj", "nsubjpass", "nsubj:pass"}),
    "ARG2": frozenset({"dobj", "obj", "xcomp", "ccomp", "nmod", "obl"}),
    "ARG3": frozenset({"iobj", "dative"}),
}


@dataclass(frozen=True)
class PatternTable:
    """Role-to-relation patterns plus the POS tags counted as predicates."""

    role_patterns: Mapping[str, frozenset[str]] = field(
        default_factory=lambda: dict(DEFAULT_ROLE_PATTERNS)
    )
    predicate_pos: frozenset[str] = frozenset({"VERB"})

    def __post_init__(self):
        object.__setattr__(
            self, "role_patterns", {r: frozenset(v) for r, v in self.role_patterns.items()}
        )
        object.__setattr__(self, "predicate_pos", frozenset(self.predicate_pos))
        unknown = set(self.role_patterns) - set(ARGUMENT_ROLES)
        if unknown:
            raise ValidationError(f"unknown roles in pattern table: {sorted(unknown)}")
        roles = sorted(self.role_patterns)
        for i, role_a in enumerate(roles):
            for role_b in roles[i + 1 :]:
                shared = self.role_patterns[role_a] & self.role_patterns[role_b]
                if shared:
                    raise ValidationError(
                        f"relations {sorted(shared)} assigned to both {role_a} and {role_b}"
                    )


DEFAULT_TABLE = PatternTable()


def load_pattern_table(path) -> PatternTable:
    """Load a table from a plain key/value file.

    Keys are ``predicate_pos`` or role names; values are comma-separated
    labels, e.g. ``ARG2 = dobj, obj, xcomp``.
    """
    role_patterns: dict[str, frozenset[str]] = {}
    predicate_pos = frozenset({"VERB"})
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValidationError(f"pattern table line {line_no}: expected 'key = values'")
            key = key.strip()
            values = frozenset(v.strip() for v in value.split(",") if v.strip())
            if key == "predicate_pos":
                predicate_pos = values
            else:
                role_patterns[key] = values
    return PatternTable(role_patterns=role_patterns, predicate_pos=predicate_pos)


def identify_predicates(sentence: ParsedSentence, table: PatternTable = DEFAULT_TABLE) -> list[int]:
    """Indices of predicate tokens: POS in ``predicate_pos``, auxiliaries excluded."""
    return [
        tok.index
        for tok in sentence.tokens
        if tok.upos in table.predicate_pos and tok.deprel not in AUX_DEPRELS
    ]


def match_argument_heads(
    sentence: ParsedSentence, predicate: int, table: PatternTable = DEFAULT_TABLE
) -> dict[str, int]:
    """For each role, the first child of the predicate (by surface order)
    attached via one of the role's relations."""
    heads: dict[str, int] = {}
    for child in sentence.children_of(predicate):
        deprel = sentence.token(child).deprel
        for role, relations in table.role_patterns.items():
            if deprel in relations and role not in heads:
                heads[role] = child
    return heads


def _window_around(center: int, lo: int, hi: int, excluded: Iterable[int]) -> Span:
    """Largest contiguous [lo, hi] sub-range containing ``center`` that
    avoids every excluded position."""
    for pos in excluded:
        if lo <= pos <= hi:
            if pos < center:
                lo = max(lo, pos + 1)
            elif pos > center:
                hi = min(hi, pos - 1)
    return lo, hi


def expand_subtree_span(
    sentence: ParsedSentence,
    head: int,
    predicate: int,
    blocked: Iterable[int] = (),
) -> Span:
    """Contiguous token range covering the subtree rooted at ``head``.

    The range is truncated so it never contains the predicate token or any
    position in ``blocked`` (the other matched argument heads).
    """
    nodes = sentence.subtree(head)
    lo, hi = nodes[0], nodes[-1]
    excluded = set(blocked) | {predicate}
    excluded.discard(head)
    return _window_around(head, lo, hi, sorted(excluded))


def generate_instances(
    sentence: ParsedSentence, table: PatternTable = DEFAULT_TABLE
) -> list[TaggedInstance]:
    """One noisy BIO instance per detected predicate.

    The predicate token gets B-P, each matched argument head is expanded
    to its phrase span, and predicates with no matched arguments are
    dropped. Spans are assigned in fixed role order and clipped against
    positions already taken, so instances always pass BIO validation with
    pairwise disjoint spans.
    """
    instances = []
    for predicate in identify_predicates(sentence, table):
        heads = match_argument_heads(sentence, predicate, table)
        if not heads:
            continue
        labels = [OUTSIDE] * len(sentence)
        labels[predicate - 1] = "B-P"
        occupied = {predicate}
        for role in ARGUMENT_ROLES:
            if role not in heads:
                continue
            head = heads[role]
            other_heads = {h for r, h in heads.items() if r != role}
            lo, hi = expand_subtree_span(sentence, head, predicate, blocked=other_heads)
            lo, hi = _window_around(head, lo, hi, sorted(occupied))
            labels[lo - 1] = f"B-{role}"
            for pos in range(lo + 1, hi + 1):
                labels[pos - 1] = f"I-{role}"
            occupied.update(range(lo, hi + 1))
        instances.append(
            TaggedInstance(
                sentence=sentence,
                predicate_index=predicate,
                tags=TagSequence(tuple(labels)),
            )
        )
    return instances

"""Weakly supervised open information extraction toolkit.

Pipeline stages: dependency-pattern labelling functions produce noisy BIO
training instances, a recurrent tagger is pretrained on them by maximum
likelihood, and a policy-gradient stage generalizes the tagger using a
reward that combines a syntactic headword constraint with a semantic
consistency score. Extractions are evaluated against gold tuples with the
headword-match criterion and precision-recall curves.
"""

from oiekit.core import (
    ARGUMENT_ROLES,
    DEFAULT_LABELS,
    DEFAULT_ROLES,
    Extraction,
    NonTreeParse,
    NoPredicateSpan,
    OiekitError,
    OUTSIDE,
    ParsedSentence,
    PREDICATE_ROLE,
    Span,
    SpanOutOfBounds,
    TaggedInstance,
    TagSequence,
    Token,
    ValidationError,
    bio_labels,
    spans_from_tags,
    tags_from_spans,
    validate_bio,
)

__version__ = "0.1.0"

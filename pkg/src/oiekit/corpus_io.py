"""Corpus input/output: CoNLL-U parses, gold tuples, extraction files,
tagged-instance files, and a deterministic synthetic corpus generator."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from oiekit.core import (
    Extraction,
    NonTreeParse,
    OiekitError,
    ParsedSentence,
    TaggedInstance,
    TagSequence,
    Token,
)

log = logging.getLogger(__name__)

# CoNLL-U column layout.
ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)


class ParseError(OiekitError):
    """Malformed input data; carries the offending line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class GoldTuple:
    """A reference tuple identified by syntactic head indices.

    ``surfaces`` holds display strings per role and never affects matching.
    """

    sentence_id: str
    predicate_head: int
    role_heads: Mapping[str, int]
    surfaces: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "role_heads", dict(self.role_heads))
        object.__setattr__(self, "surfaces", dict(self.surfaces))


# ---------------------------------------------------------------------------
# CoNLL-U
# ---------------------------------------------------------------------------


def read_conllu(path) -> list[ParsedSentence]:
    """Read a CoNLL-U file into parsed sentences.

    Uses the ID, FORM, UPOS, HEAD and DEPREL columns. Multiword-token
    ranges (IDs like ``3-4``) and empty nodes (IDs like ``3.1``) are
    skipped. ``# sent_id = ...`` comments name the sentence when present.
    """
    sentences = []
    tokens: list[Token] = []
    sent_id: Optional[str] = None
    text = ""

    def flush(line_no):
        nonlocal tokens, sent_id, text
        if not tokens:
            return
        sid = sent_id if sent_id is not None else f"s{len(sentences) + 1}"
        try:
            sentences.append(ParsedSentence(sentence_id=sid, tokens=tuple(tokens), text=text))
        except OiekitError as exc:
            raise type(exc)(f"sentence ending at line {line_no}: {exc}") from exc
        tokens = []
        sent_id = None
        text = ""

    with open(path, "r", encoding="utf-8") as handle:
        line_no = 0
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                flush(line_no)
                continue
            if line.startswith("#"):
                comment = line[1:].strip()
                if comment.startswith("sent_id"):
                    _, _, value = comment.partition("=")
                    sent_id = value.strip()
                elif comment.startswith("text"):
                    _, _, value = comment.partition("=")
                    text = value.strip()
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise ParseError(f"expected 10 tab-separated columns, got {len(cols)}", line_no)
            if "-" in cols[ID] or "." in cols[ID]:
                continue
            try:
                index = int(cols[ID])
                head = int(cols[HEAD])
            except ValueError:
                raise ParseError(f"non-integer ID or HEAD in {cols[ID]!r}/{cols[HEAD]!r}", line_no)
            if head == index:
                raise NonTreeParse(f"line {line_no}: token {index} is its own head")
            try:
                tokens.append(
                    Token(index=index, surface=cols[FORM], upos=cols[UPOS], head=head, deprel=cols[DEPREL])
                )
            except OiekitError as exc:
                raise type(exc)(f"line {line_no}: {exc}") from exc
        flush(line_no)
    return sentences


def write_conllu(sentences: Iterable[ParsedSentence], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sent in sentences:
            handle.write(f"# sent_id = {sent.sentence_id}\n")
            handle.write(f"# text = {sent.text}\n")
            for tok in sent.tokens:
                handle.write(
                    f"{tok.index}\t{tok.surface}\t_\t{tok.upos}\t_\t_\t{tok.head}\t{tok.deprel}\t_\t_\n"
                )
            handle.write("\n")


# ---------------------------------------------------------------------------
# Gold tuples (TSV, one row per role filler)
# ---------------------------------------------------------------------------


def read_gold(path, sentences: Optional[Mapping[str, ParsedSentence]] = None) -> list[GoldTuple]:
    """Read a gold TSV with columns
    ``sentence_id  predicate_head  role  role_head  [surface]``.

    Rows are grouped by (sentence_id, predicate_head). When ``sentences``
    is given, rows referencing unknown sentence ids are reported and
    skipped, and out-of-bounds head indices raise :class:`ParseError`.
    """
    grouped: dict[tuple[str, int], dict] = {}
    order: list[tuple[str, int]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 4:
                raise ParseError("expected at least 4 tab-separated columns", line_no)
            sid, pred_raw, role, head_raw = cols[0], cols[1], cols[2], cols[3]
            surface = cols[4] if len(cols) > 4 else ""
            try:
                pred_head = int(pred_raw)
                role_head = int(head_raw)
            except ValueError:
                raise ParseError(f"non-integer head index in {pred_raw!r}/{head_raw!r}", line_no)
            if sentences is not None:
                if sid not in sentences:
                    log.warning("gold line %d references unknown sentence %r; skipped", line_no, sid)
                    continue
                m = len(sentences[sid])
                if not (1 <= pred_head <= m) or not (1 <= role_head <= m):
                    raise ParseError(f"head index outside sentence {sid!r} of length {m}", line_no)
            key = (sid, pred_head)
            if key not in grouped:
                grouped[key] = {"role_heads": {}, "surfaces": {}}
                order.append(key)
            if role in grouped[key]["role_heads"]:
                raise ParseError(f"duplicate role {role!r} for predicate {pred_head} in {sid!r}", line_no)
            grouped[key]["role_heads"][role] = role_head
            if surface:
                grouped[key]["surfaces"][role] = surface
    return [
        GoldTuple(sentence_id=sid, predicate_head=pred, role_heads=grouped[(sid, pred)]["role_heads"],
                  surfaces=grouped[(sid, pred)]["surfaces"])
        for sid, pred in order
    ]


def write_gold(golds: Iterable[GoldTuple], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for gold in golds:
            for role, head in gold.role_heads.items():
                surface = gold.surfaces.get(role, "")
                handle.write(f"{gold.sentence_id}\t{gold.predicate_head}\t{role}\t{head}\t{surface}\n")


# ---------------------------------------------------------------------------
# Extraction files (JSON lines)
# ---------------------------------------------------------------------------


def extraction_to_dict(extraction: Extraction, reward: Optional[dict] = None) -> dict:
    record = {
        "sentence_id": extraction.sentence_id,
        "predicate_span": list(extraction.predicate_span),
        "role_spans": {role: list(span) for role, span in sorted(extraction.role_spans.items())},
        "confidence": extraction.confidence,
    }
    if reward is not None:
        record["reward"] = reward
    return record


def extraction_from_dict(record: dict) -> Extraction:
    return Extraction(
        sentence_id=record["sentence_id"],
        predicate_span=tuple(record["predicate_span"]),
        role_spans={role: tuple(span) for role, span in record["role_spans"].items()},
        confidence=record["confidence"],
    )


def write_extractions(extractions: Iterable[Extraction], path,
                      rewards: Optional[Sequence[Optional[dict]]] = None) -> None:
    """Write one JSON record per line; ``rewards`` optionally attaches a
    reward breakdown dict to each extraction."""
    extractions = list(extractions)
    if rewards is None:
        rewards = [None] * len(extractions)
    with open(path, "w", encoding="utf-8") as handle:
        for extraction, reward in zip(extractions, rewards):
            handle.write(json.dumps(extraction_to_dict(extraction, reward), sort_keys=True))
            handle.write("\n")


def read_extractions(path) -> list[Extraction]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                out.append(extraction_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"bad extraction record: {exc}", line_no)
    return out


# ---------------------------------------------------------------------------
# Tagged-instance files (JSON lines, parses embedded)
# ---------------------------------------------------------------------------


def sentence_to_dict(sentence: ParsedSentence) -> dict:
    return {
        "sentence_id": sentence.sentence_id,
        "text": sentence.text,
        "tokens": [
            {"index": t.index, "surface": t.surface, "upos": t.upos, "head": t.head, "deprel": t.deprel}
            for t in sentence.tokens
        ],
    }


def sentence_from_dict(record: dict) -> ParsedSentence:
    return ParsedSentence(
        sentence_id=record["sentence_id"],
        tokens=tuple(Token(**tok) for tok in record["tokens"]),
        text=record.get("text", ""),
    )


def write_instances(instances: Iterable[TaggedInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for inst in instances:
            record = {
                "sentence": sentence_to_dict(inst.sentence),
                "predicate_index": inst.predicate_index,
                "labels": list(inst.tags.labels),
            }
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


def read_instances(path) -> list[TaggedInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                out.append(
                    TaggedInstance(
                        sentence=sentence_from_dict(record["sentence"]),
                        predicate_index=record["predicate_index"],
                        tags=TagSequence(tuple(record["labels"])),
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"bad instance record: {exc}", line_no)
    return out


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

_NOUNS = (
    "farmer", "cat", "dog", "teacher", "student", "piano", "garden", "letter",
    "coach", "robot", "driver", "nurse", "painter", "violin", "ball", "book",
    "singer", "pilot", "horse", "wagon", "baker", "kite", "poem", "engine",
)
_VERBS = (
    "feeds", "walks", "paints", "carries", "greets", "teaches", "lifts",
    "repairs", "watches", "praises", "pushes", "holds", "draws", "cleans",
    "guards", "follows",
)
_DITRANS_VERBS = ("gives", "sends", "offers", "shows", "brings", "hands")
_ADJECTIVES = ("old", "young", "tall", "small", "happy", "clever", "tired", "busy")
_PLACES = ("barn", "park", "school", "yard", "hall", "field", "cafe", "tower")
_PREPOSITIONS = ("in", "near", "behind", "beside")

TEMPLATE_NAMES = ("svo", "svo_pp", "ditrans", "coord_vp")


class _Node:
    __slots__ = ("surface", "upos", "deprel", "parent", "index")

    def __init__(self, surface, upos, deprel, parent):
        self.surface = surface
        self.upos = upos
        self.deprel = deprel
        self.parent = parent
        self.index = 0


def _noun_phrase(rng: np.random.Generator, noun: str, deprel: str, parent: Optional[_Node]):
    """Determiner [adjective] noun, returning (nodes, head node)."""
    head = _Node(noun, "NOUN", deprel, parent)
    nodes = [_Node(str(rng.choice(["the", "a"])), "DET", "det", head)]
    if rng.random() < 0.3:
        nodes.append(_Node(str(rng.choice(_ADJECTIVES)), "ADJ", "amod", head))
    nodes.append(head)
    return nodes, head


def _realize(sentence_id: str, nodes: list[_Node]) -> ParsedSentence:
    for pos, node in enumerate(nodes, start=1):
        node.index = pos
    tokens = tuple(
        Token(
            index=node.index,
            surface=node.surface,
            upos=node.upos,
            head=node.parent.index if node.parent is not None else 0,
            deprel=node.deprel,
        )
        for node in nodes
    )
    return ParsedSentence(sentence_id=sentence_id, tokens=tokens)


def _sample_nouns(rng, pool, k):
    picks = rng.choice(len(pool), size=k, replace=False)
    return [pool[int(i)] for i in picks]


def _build_svo(rng, sentence_id):
    n1, n2 = _sample_nouns(rng, _NOUNS, 2)
    verb = _Node(str(rng.choice(_VERBS)), "VERB", "root", None)
    subj_nodes, subj = _noun_phrase(rng, n1, "nsubj", verb)
    obj_nodes, obj = _noun_phrase(rng, n2, "obj", verb)
    nodes = subj_nodes + [verb] + obj_nodes + [_Node(".", "PUNCT", "punct", verb)]
    sent = _realize(sentence_id, nodes)
    gold = [GoldTuple(sentence_id, verb.index,
                      {"ARG1": subj.index, "ARG2": obj.index},
                      {"P": verb.surface, "ARG1": subj.surface, "ARG2": obj.surface})]
    return sent, gold


def _build_svo_pp(rng, sentence_id):
    n1, n2 = _sample_nouns(rng, _NOUNS, 2)
    verb = _Node(str(rng.choice(_VERBS)), "VERB", "root", None)
    subj_nodes, subj = _noun_phrase(rng, n1, "nsubj", verb)
    obj_nodes, obj = _noun_phrase(rng, n2, "obj", verb)
    # The place phrase modifies the object noun, keeping its subtree intact.
    place = _Node(str(rng.choice(_PLACES)), "NOUN", "nmod", obj)
    prep = _Node(str(rng.choice(_PREPOSITIONS)), "ADP", "case", place)
    det = _Node("the", "DET", "det", place)
    nodes = subj_nodes + [verb] + obj_nodes + [prep, det, place, _Node(".", "PUNCT", "punct", verb)]
    sent = _realize(sentence_id, nodes)
    gold = [GoldTuple(sentence_id, verb.index,
                      {"ARG1": subj.index, "ARG2": obj.index},
                      {"P": verb.surface, "ARG1": subj.surface, "ARG2": obj.surface})]
    return sent, gold


def _build_ditrans(rng, sentence_id):
    n1, n2, n3 = _sample_nouns(rng, _NOUNS, 3)
    verb = _Node(str(rng.choice(_DITRANS_VERBS)), "VERB", "root", None)
    subj_nodes, subj = _noun_phrase(rng, n1, "nsubj", verb)
    iobj_nodes, iobj = _noun_phrase(rng, n2, "iobj", verb)
    obj_nodes, obj = _noun_phrase(rng, n3, "obj", verb)
    nodes = subj_nodes + [verb] + iobj_nodes + obj_nodes + [_Node(".", "PUNCT", "punct", verb)]
    sent = _realize(sentence_id, nodes)
    gold = [GoldTuple(sentence_id, verb.index,
                      {"ARG1": subj.index, "ARG2": obj.index, "ARG3": iobj.index},
                      {"P": verb.surface, "ARG1": subj.surface, "ARG2": obj.surface,
                       "ARG3": iobj.surface})]
    return sent, gold


def _build_coord_vp(rng, sentence_id):
    """Two verbs sharing a subject; only the first verb governs it."""
    n1, n2, n3 = _sample_nouns(rng, _NOUNS, 3)
    v1_surface, v2_surface = (str(v) for v in rng.choice(_VERBS, size=2, replace=False))
    v1 = _Node(v1_surface, "VERB", "root", None)
    subj_nodes, subj = _noun_phrase(rng, n1, "nsubj", v1)
    obj1_nodes, obj1 = _noun_phrase(rng, n2, "obj", v1)
    v2 = _Node(v2_surface, "VERB", "conj", v1)
    cc = _Node("and", "CCONJ", "cc", v2)
    obj2_nodes, obj2 = _noun_phrase(rng, n3, "obj", v2)
    nodes = subj_nodes + [v1] + obj1_nodes + [cc, v2] + obj2_nodes + [_Node(".", "PUNCT", "punct", v1)]
    sent = _realize(sentence_id, nodes)
    gold = [
        GoldTuple(sentence_id, v1.index, {"ARG1": subj.index, "ARG2": obj1.index},
                  {"P": v1.surface, "ARG1": subj.surface, "ARG2": obj1.surface}),
        GoldTuple(sentence_id, v2.index, {"ARG1": subj.index, "ARG2": obj2.index},
                  {"P": v2.surface, "ARG1": subj.surface, "ARG2": obj2.surface}),
    ]
    return sent, gold


_BUILDERS = {
    "svo": _build_svo,
    "svo_pp": _build_svo_pp,
    "ditrans": _build_ditrans,
    "coord_vp": _build_coord_vp,
}


def _normalize_templates(template_set) -> tuple[list[str], list[float]]:
    if isinstance(template_set, Mapping):
        items = list(template_set.items())
    else:
        items = []
        for entry in template_set:
            if isinstance(entry, str):
                items.append((entry, 1.0))
            else:
                name, weight = entry
                items.append((name, float(weight)))
    names = [name for name, _ in items]
    weights = [weight for _, weight in items]
    for name in names:
        if name not in _BUILDERS:
            raise ValueError(f"unknown template {name!r}; known: {sorted(_BUILDERS)}")
    total = sum(weights)
    if total <= 0:
        raise ValueError("template weights must sum to a positive value")
    return names, [w / total for w in weights]


def gen_synthetic(template_set=TEMPLATE_NAMES, n: int = 100, seed: int = 0):
    """Generate ``n`` parsed sentences plus gold tuples known by construction.

    ``template_set`` is a sequence of template names, (name, weight) pairs,
    or a name-to-weight mapping. Output is deterministic for a fixed seed.
    """
    names, weights = _normalize_templates(template_set)
    rng = np.random.default_rng(seed)
    sentences: list[ParsedSentence] = []
    golds: list[GoldTuple] = []
    for i in range(n):
        name = names[int(rng.choice(len(names), p=weights))]
        sentence_id = f"syn{i:05d}-{name}"
        sent, gold = _BUILDERS[name](rng, sentence_id)
        sentences.append(sent)
        golds.extend(gold)
    return sentences, golds


def template_of(sentence_id: str) -> str:
    """Template name embedded in a synthetic sentence id."""
    return sentence_id.rsplit("-", 1)[-1]

"""Policy-gradient generalization of a pretrained tagger: explore label
sequences with constrained beam search, score each candidate with the
syntactic-semantic reward, and apply likelihood-ratio updates."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from oiekit import evaluate, nn, tagger
from oiekit.core import (
    NoPredicateSpan,
    OiekitError,
    ParsedSentence,
    TaggedInstance,
    TagSequence,
    spans_from_tags,
)
from oiekit.corpus_io import GoldTuple
from oiekit.patterns import DEFAULT_TABLE, PatternTable, identify_predicates
from oiekit.reward import RewardBreakdown, SemScorer, combined_reward, syn_score
from oiekit.tagger import TaggerModel, allowed_labels

log = logging.getLogger(__name__)


class NonFiniteGradient(OiekitError):
    """A policy-gradient update produced non-finite values; aborts."""


@dataclass(frozen=True)
class RLConfig:
    epochs: int = 10
    beam_size: int = 3
    baseline_mode: str = "mean"  # "mean" or "off"
    step_size: float = 1e-3
    explore_mode: str = "beam"  # "beam" or "sample"
    rng_seed: int = 13

    def __post_init__(self):
        if self.baseline_mode not in ("mean", "off"):
            raise OiekitError(f"unknown baseline mode {self.baseline_mode!r}")
        if self.explore_mode not in ("beam", "sample"):
            raise OiekitError(f"unknown explore mode {self.explore_mode!r}")
        if self.beam_size < 1:
            raise OiekitError("beam_size must be >= 1")


def _sample_sequences(distributions: np.ndarray, count: int, predicate: int,
                      labels: Sequence[str], rng: np.random.Generator) -> list[TagSequence]:
    """Ancestral sampling under the decoding constraints (renormalized per
    position); duplicates are collapsed."""
    label_index = {label: i for i, label in enumerate(labels)}
    seen = {}
    for _ in range(count):
        prev = "O"
        chosen = []
        score = 0.0
        for position in range(1, distributions.shape[0] + 1):
            options = allowed_labels(prev, position, predicate, labels)
            weights = np.array([distributions[position - 1, label_index[o]] for o in options])
            total = weights.sum()
            if total <= 0:
                weights = np.ones(len(options)) / len(options)
            else:
                weights = weights / total
            pick = options[int(rng.choice(len(options), p=weights))]
            score += float(np.log(max(distributions[position - 1, label_index[pick]], 1e-300)))
            chosen.append(pick)
            prev = pick
        seen.setdefault(tuple(chosen), score)
    return [TagSequence(labels=seq, log_prob=score) for seq, score in seen.items()]


def explore(model: TaggerModel, sentence: ParsedSentence, predicate: int,
            beam_size: int, mode: str = "beam",
            rng: Optional[np.random.Generator] = None) -> list[TagSequence]:
    """Candidate label sequences for one predicate: the top-``beam_size``
    constrained beam, or i.i.d. constrained samples in sampling mode."""
    probs, _ = tagger.forward(sentence, predicate, model)
    if mode == "beam":
        return tagger.beam_decode(probs, beam_size, predicate, model.labels)
    if rng is None:
        raise OiekitError("sampling exploration needs a random generator")
    return _sample_sequences(probs, beam_size, predicate, model.labels, rng)


def candidate_reward(candidate: TagSequence, sentence: ParsedSentence, predicate: int,
                     scorer: SemScorer, table: PatternTable = DEFAULT_TABLE) -> RewardBreakdown:
    """Reward of one candidate sequence. Candidates that decode to no
    extraction score syn=-1, sem=0."""
    try:
        extraction = spans_from_tags(TaggedInstance(sentence, predicate, candidate))
    except NoPredicateSpan:
        return combined_reward(-1, 0.0)
    syn = syn_score(extraction, sentence, table)
    sem = scorer.score(extraction, sentence)
    return combined_reward(syn, sem)


def _advantages(rewards: Sequence[float], baseline_mode: str) -> list[float]:
    if baseline_mode == "mean":
        baseline = sum(rewards) / len(rewards)
    else:
        baseline = 0.0
    return [r - baseline for r in rewards]


def _policy_dlogits(model: TaggerModel, cache, candidates: Sequence[TagSequence],
                    weights: Sequence[float]) -> np.ndarray:
    """Logit gradient of sum_k w_k * log P(Y_k), exploiting linearity so a
    single backward pass covers every candidate."""
    probs = cache["probs"]
    label_index = {label: i for i, label in enumerate(model.labels)}
    dlogits = np.zeros_like(probs)
    rows = np.arange(probs.shape[0])
    for candidate, weight in zip(candidates, weights):
        if weight == 0.0:
            continue
        cols = np.array([label_index[label] for label in candidate.labels])
        onehot_minus_probs = -probs * weight
        onehot_minus_probs[rows, cols] += weight
        dlogits += onehot_minus_probs
    return dlogits


def reinforce_step(model: TaggerModel, optimizer: nn.Adam, sentence: ParsedSentence,
                   predicate: int, candidates: Sequence[TagSequence],
                   rewards: Sequence[float], baseline_mode: str = "mean") -> float:
    """One likelihood-ratio update: ascend sum_k (R_k - b) grad log P(Y_k).

    Returns the squared gradient norm (0.0 means the parameters were left
    untouched, as with a single candidate under the mean baseline).
    """
    if not candidates or len(candidates) != len(rewards):
        raise OiekitError("need equally many candidates and rewards, at least one each")
    _, cache = tagger.forward(sentence, predicate, model)
    advantages = _advantages(list(rewards), baseline_mode)
    dlogits = _policy_dlogits(model, cache, candidates, advantages)
    if not np.all(dlogits == 0.0):
        ascent = tagger.backward_from_dlogits(model, cache, dlogits)
        if not nn.grads_finite(ascent):
            raise NonFiniteGradient(
                f"non-finite policy gradient on {sentence.sentence_id!r}"
            )
        descent = {name: -grad for name, grad in ascent.items()}
        optimizer.step(descent)
        return float(sum((g * g).sum() for g in ascent.values()))
    return 0.0


def exact_policy_gradient(model: TaggerModel, sentence: ParsedSentence, predicate: int,
                          reward_fn: Callable[[TagSequence], float]) -> dict:
    """Exact score-function gradient of the expected reward: the sum over
    every constraint-satisfying sequence of P(Y) R(Y) grad log P(Y)."""
    probs, cache = tagger.forward(sentence, predicate, model)
    label_index = {label: i for i, label in enumerate(model.labels)}
    sequences = tagger.enumerate_valid_sequences(len(sentence), predicate, model.labels)
    candidates = []
    weights = []
    for seq in sequences:
        p = 1.0
        for position, label in enumerate(seq):
            p *= probs[position, label_index[label]]
        candidates.append(TagSequence(labels=seq))
        weights.append(p * reward_fn(TagSequence(labels=seq)))
    dlogits = _policy_dlogits(model, cache, candidates, weights)
    return tagger.backward_from_dlogits(model, cache, dlogits)


def expected_reward_oracle(model: TaggerModel, sentence: ParsedSentence, predicate: int,
                           reward_fn: Callable[[TagSequence], float]) -> float:
    """Exact expected reward: sum over all constraint-satisfying sequences
    of P(Y) * R(Y). Enumeration-bound to short sentences."""
    if len(sentence) > 6:
        raise OiekitError("expected_reward_oracle enumerates sequences; use m <= 6")
    probs, _ = tagger.forward(sentence, predicate, model)
    label_index = {label: i for i, label in enumerate(model.labels)}
    total = 0.0
    for seq in tagger.enumerate_valid_sequences(len(sentence), predicate, model.labels):
        p = 1.0
        for position, label in enumerate(seq):
            p *= probs[position, label_index[label]]
        total += p * reward_fn(TagSequence(labels=seq))
    return total


def train_rl(model: TaggerModel, corpus: Sequence[ParsedSentence], scorer: SemScorer,
             config: RLConfig = RLConfig(), table: PatternTable = DEFAULT_TABLE,
             dev: Optional[tuple[Sequence[ParsedSentence], Optional[Sequence[GoldTuple]]]] = None,
             metrics_path=None) -> list[dict]:
    """Reward-driven fine-tuning over every (sentence, predicate) pair.

    Logs per epoch: mean candidate reward and its syntactic/semantic parts,
    plus the mean top-1 reward and headword F1 on the dev split when one is
    supplied. Deterministic for a fixed seed.
    """
    if not corpus:
        raise OiekitError("reinforcement learning needs a non-empty corpus")
    if _looks_fresh(model):
        log.warning("model parameters look freshly initialized; pretrain first")
    rng = np.random.default_rng(config.rng_seed)
    optimizer = nn.Adam(model.params, step_size=config.step_size)
    corpus = list(corpus)
    metrics: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(corpus))
        reward_sum = syn_sum = sem_sum = 0.0
        count = 0
        for idx in order:
            sentence = corpus[idx]
            for predicate in identify_predicates(sentence, table):
                candidates = explore(model, sentence, predicate, config.beam_size,
                                     mode=config.explore_mode, rng=rng)
                breakdowns = [
                    candidate_reward(c, sentence, predicate, scorer, table) for c in candidates
                ]
                reinforce_step(model, optimizer, sentence, predicate, candidates,
                               [b.total for b in breakdowns], config.baseline_mode)
                for b in breakdowns:
                    reward_sum += b.total
                    syn_sum += b.syn
                    sem_sum += b.sem
                    count += 1
        row = {
            "epoch": epoch,
            "mean_reward": reward_sum / count if count else 0.0,
            "mean_syn": syn_sum / count if count else 0.0,
            "mean_sem": sem_sum / count if count else 0.0,
            "dev_mean_reward": None,
            "dev_f1": None,
        }
        if dev is not None:
            dev_sentences, dev_gold = dev
            row["dev_mean_reward"] = _dev_mean_reward(model, dev_sentences, scorer, table)
            if dev_gold:
                preds = []
                for sentence in dev_sentences:
                    preds.extend(tagger.extract(sentence, model, table))
                row["dev_f1"] = evaluate.best_f1(evaluate.pr_curve(preds, dev_gold))
        metrics.append(row)
        log.info("epoch %d: mean reward %.4f dev %s", epoch, row["mean_reward"], row["dev_f1"])
    if metrics_path is not None:
        write_metrics(metrics, metrics_path)
    return metrics


def _dev_mean_reward(model: TaggerModel, sentences: Sequence[ParsedSentence],
                     scorer: SemScorer, table: PatternTable) -> float:
    total = 0.0
    count = 0
    for sentence in sentences:
        for predicate in identify_predicates(sentence, table):
            probs, _ = tagger.forward(sentence, predicate, model)
            best = tagger.beam_decode(probs, 1, predicate, model.labels)[0]
            total += candidate_reward(best, sentence, predicate, scorer, table).total
            count += 1
    return total / count if count else 0.0


def _looks_fresh(model: TaggerModel) -> bool:
    # Uniform [-0.1, 0.1] initialization never exceeds 0.1 in magnitude.
    return all(np.abs(arr).max() <= 0.1 for arr in model.params.values())


def write_metrics(metrics: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in metrics:
            handle.write(json.dumps(row, sort_keys=True))
            handle.write("\n")

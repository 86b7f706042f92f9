"""Pretraining stage: minimize the negative log-likelihood of (noisy) BIO
labels over a corpus of tagged instances, with a finite-difference
gradient-check harness for verification."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from oiekit import evaluate, nn, tagger
from oiekit.core import OiekitError, TaggedInstance, spans_from_tags
from oiekit.tagger import TaggerModel

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class NonFiniteLoss(OiekitError):
    """Training hit a non-finite loss; aborts with diagnostics."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    step_size: float = 1e-3
    dev_fraction: float = 0.1
    patience: int = 3
    rng_seed: int = 13


def _gold_probs(model: TaggerModel, instance: TaggedInstance, probs: np.ndarray) -> np.ndarray:
    label_index = {label: i for i, label in enumerate(model.labels)}
    cols = np.array([label_index[label] for label in instance.tags.labels])
    chosen = probs[np.arange(len(cols)), cols]
    if (chosen <= 0.0).any():
        warnings.warn(
            "zero label probability clamped to 1e-12 "
            f"(sentence {instance.sentence.sentence_id!r})",
            RuntimeWarning,
        )
        chosen = np.maximum(chosen, PROB_FLOOR)
    return chosen


def mle_loss(model: TaggerModel, instance: TaggedInstance) -> float:
    """Negative log-likelihood of the instance's labels, summed over tokens."""
    probs, _ = tagger.forward(instance.sentence, instance.predicate_index, model)
    return float(-np.log(_gold_probs(model, instance, probs)).sum())


def instance_grads(model: TaggerModel, instance: TaggedInstance,
                   scale: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """(loss, gradients) for one instance; gradients are of ``scale *
    loss`` (callers use 1/m for token-mean aggregation)."""
    probs, cache = tagger.forward(instance.sentence, instance.predicate_index, model)
    label_index = {label: i for i, label in enumerate(model.labels)}
    cols = np.array([label_index[label] for label in instance.tags.labels])
    loss = float(-np.log(_gold_probs(model, instance, probs)).sum())
    dlogits = probs.copy()
    dlogits[np.arange(len(cols)), cols] -= 1.0
    grads = tagger.backward_from_dlogits(model, cache, dlogits * scale)
    return loss, grads


def _accumulate(total: Optional[dict], grads: dict) -> dict:
    if total is None:
        return grads
    for name, grad in grads.items():
        total[name] += grad
    return total


def pretrain(model: TaggerModel, corpus: Sequence[TaggedInstance],
             config: TrainConfig = TrainConfig(),
             dev: Optional[Sequence[TaggedInstance]] = None,
             metrics_path=None) -> list[dict]:
    """Minimize mean token-level NLL with Adam; early-stops on dev loss and
    restores the best parameters. Returns the per-epoch metrics rows."""
    if not corpus:
        raise OiekitError("pretraining needs a non-empty corpus")
    rng = np.random.default_rng(config.rng_seed)
    corpus = list(corpus)
    if dev is None:
        permuted = [corpus[i] for i in rng.permutation(len(corpus))]
        dev_count = max(1, int(len(permuted) * config.dev_fraction)) if len(permuted) > 1 else 0
        dev = permuted[len(permuted) - dev_count :]
        train = permuted[: len(permuted) - dev_count] or permuted
    else:
        train = corpus
        dev = list(dev)

    optimizer = nn.Adam(model.params, step_size=config.step_size)
    metrics: list[dict] = []
    best_dev = float("inf")
    best_params = {name: arr.copy() for name, arr in model.params.items()}
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            total = None
            for instance in batch:
                loss, grads = instance_grads(model, instance, scale=1.0 / len(instance.tags))
                if not np.isfinite(loss):
                    raise NonFiniteLoss(
                        f"non-finite loss at epoch {epoch}, sentence "
                        f"{instance.sentence.sentence_id!r}"
                    )
                epoch_loss += loss / len(instance.tags)
                total = _accumulate(total, grads)
            for name in total:
                total[name] /= len(batch)
            if not nn.grads_finite(total):
                raise NonFiniteLoss(f"non-finite gradient at epoch {epoch}")
            optimizer.step(total)
        train_loss = epoch_loss / len(train)
        dev_loss = dev_f1 = None
        if dev:
            dev_loss = float(np.mean([
                mle_loss(model, inst) / len(inst.tags) for inst in dev
            ]))
            dev_f1 = _dev_f1(model, dev)
        row = {"epoch": epoch, "train_loss": train_loss,
               "dev_loss": dev_loss, "dev_f1": dev_f1}
        metrics.append(row)
        log.info("epoch %d: train %.4f dev %s f1 %s", epoch, train_loss, dev_loss, dev_f1)
        if dev:
            if dev_loss < best_dev - 1e-9:
                best_dev = dev_loss
                best_params = {name: arr.copy() for name, arr in model.params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if dev:
        for name, arr in best_params.items():
            model.params[name][...] = arr
    if metrics_path is not None:
        write_metrics(metrics, metrics_path)
    return metrics


def _dev_f1(model: TaggerModel, dev: Sequence[TaggedInstance]) -> float:
    """Headword F1 of top-1 decodes against the tuples implied by the dev
    instances' own labels."""
    golds = []
    preds = []
    for instance in dev:
        try:
            golds.append(evaluate.gold_from_instance(instance))
        except OiekitError:
            continue
        probs, _ = tagger.forward(instance.sentence, instance.predicate_index, model)
        best = tagger.beam_decode(probs, 1, instance.predicate_index, model.labels)[0]
        try:
            extraction = spans_from_tags(
                TaggedInstance(instance.sentence, instance.predicate_index, best),
                confidence=tagger.confidence_avg_log(best, probs, model.labels),
            )
        except OiekitError:
            continue
        preds.append(extraction)
    if not golds:
        return 0.0
    return evaluate.tuple_f1(preds, golds)


def write_metrics(metrics: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in metrics:
            handle.write(json.dumps(row, sort_keys=True))
            handle.write("\n")


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(model: TaggerModel, instance: TaggedInstance, epsilon: float = 1e-4,
               rng: Optional[np.random.Generator] = None,
               samples_per_array: int = 5) -> float:
    """Max relative error between analytic gradients and central finite
    differences of the loss, over a sampled parameter subset."""
    if epsilon <= 0:
        raise OiekitError("epsilon must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    _, grads = instance_grads(model, instance, scale=1.0)
    worst = 0.0
    for name, param in model.params.items():
        flat = param.reshape(-1)
        count = min(samples_per_array, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        for idx in picks:
            original = flat[idx]
            flat[idx] = original + epsilon
            loss_plus = mle_loss(model, instance)
            flat[idx] = original - epsilon
            loss_minus = mle_loss(model, instance)
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            analytic = grads[name].reshape(-1)[idx]
            worst = max(worst, relative_error(analytic, numeric))
    return worst

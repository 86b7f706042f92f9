"""Command-line surface binding the pipeline stages into reproducible runs.

Commands: synth, label, pretrain, rl-train, extract, eval. Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from oiekit import corpus_io, evaluate, mle, patterns, rl, tagger
from oiekit.core import OiekitError
from oiekit.corpus_io import ParseError
from oiekit.mle import NonFiniteLoss, TrainConfig
from oiekit.reward import make_sem_scorer
from oiekit.rl import NonFiniteGradient, RLConfig
from oiekit.tagger import TaggerConfig

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SCORER_ENV = "OIEKIT_SCORER"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def load_config(path) -> dict[str, str]:
    """Plain key/value configuration: one ``key = value`` per line, ``#``
    comments, later keys win. Flags override config values."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError("expected 'key = value'", line_no)
            values[key.strip()] = value.strip()
    return values


def _pick(config: dict[str, str], key: str, cast, flag_value, default):
    """Flag beats config file beats default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return cast(config[key])
    return default


def _load_table(path):
    return patterns.load_pattern_table(path) if path else patterns.DEFAULT_TABLE


def _parse_templates(spec: str):
    """``name:weight,name:weight`` or comma-separated names."""
    entries = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, sep, weight = chunk.partition(":")
        entries.append((name.strip(), float(weight) if sep else 1.0))
    return entries


def build_parser() -> _Parser:
    parser = _Parser(prog="oiekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic parsed corpus with gold tuples")
    p.add_argument("--templates", default="svo,svo_pp,ditrans,coord_vp",
                   help="comma-separated template names, optionally name:weight")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-conllu", required=True)
    p.add_argument("--out-gold", required=True)
    p.add_argument("--dev-conllu", help="write the held-out slice here")
    p.add_argument("--dev-gold")
    p.add_argument("--dev-fraction", type=float, default=0.2)

    p = sub.add_parser("label", help="run the pattern labelling functions over a parsed corpus")
    p.add_argument("--conllu", required=True)
    p.add_argument("--patterns", help="pattern table file (defaults to the built-in table)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain", help="train the tagger on labelled instances")
    p.add_argument("--instances", required=True)
    p.add_argument("--config", help="key/value config file; flags win")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("rl-train", help="generalize a pretrained tagger with policy gradients")
    p.add_argument("--model", required=True)
    p.add_argument("--conllu", required=True)
    p.add_argument("--scorer", help="surrogate or adapter:URI "
                   f"(falls back to ${SCORER_ENV}, then surrogate)")
    p.add_argument("--beam", type=int)
    p.add_argument("--baseline", choices=["off", "mean"])
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--patterns")
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--step-size", type=float)
    p.add_argument("--sample", action="store_true",
                   help="explore with constrained sampling instead of the beam")
    p.add_argument("--dev-conllu", help="frozen dev sentences for per-epoch metrics")
    p.add_argument("--dev-gold", help="gold tuples for per-epoch dev F1")
    p.add_argument("--scorer-cache", help="cache file for adapter scores")

    p = sub.add_parser("extract", help="decode extractions with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--conllu", required=True)
    p.add_argument("--rerank", choices=["none", "sem", "combined"], default="none")
    p.add_argument("--out", required=True)
    p.add_argument("--patterns")
    p.add_argument("--scorer")
    p.add_argument("--scorer-cache")
    p.add_argument("--beam", type=int)

    p = sub.add_parser("eval", help="score extractions against gold tuples")
    p.add_argument("--extractions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--pr-out", required=True)
    p.add_argument("--conllu", help="needed only for --overlap-threshold")
    p.add_argument("--overlap-threshold", type=float,
                   help="diagnostic lexical-overlap matching instead of headword matching")

    return parser


def _resolve_scorer(flag_value, cache_path=None):
    spec = flag_value or os.environ.get(SCORER_ENV) or "surrogate"
    return make_sem_scorer(spec, cache_path=cache_path)


def cmd_synth(args) -> int:
    sentences, gold = corpus_io.gen_synthetic(_parse_templates(args.templates), args.n, args.seed)
    if args.dev_conllu:
        if not args.dev_gold:
            raise _UsageError("--dev-conllu requires --dev-gold")
        split = int(len(sentences) * (1.0 - args.dev_fraction))
        train_ids = {s.sentence_id for s in sentences[:split]}
        corpus_io.write_conllu(sentences[:split], args.out_conllu)
        corpus_io.write_conllu(sentences[split:], args.dev_conllu)
        corpus_io.write_gold([g for g in gold if g.sentence_id in train_ids], args.out_gold)
        corpus_io.write_gold([g for g in gold if g.sentence_id not in train_ids], args.dev_gold)
        print(f"wrote {split} train and {len(sentences) - split} dev sentences")
    else:
        corpus_io.write_conllu(sentences, args.out_conllu)
        corpus_io.write_gold(gold, args.out_gold)
        print(f"wrote {len(sentences)} sentences, {len(gold)} gold tuples")
    return EXIT_OK


def cmd_label(args) -> int:
    table = _load_table(args.patterns)
    sentences = corpus_io.read_conllu(args.conllu)
    instances = []
    for sentence in sentences:
        instances.extend(patterns.generate_instances(sentence, table))
    corpus_io.write_instances(instances, args.out)
    print(f"sentences: {len(sentences)}")
    print(f"instances: {len(instances)}")
    for role in ("ARG1", "ARG2", "ARG3"):
        covered = sum(1 for inst in instances if any(
            lab.endswith(role) for lab in inst.tags.labels))
        share = covered / len(instances) if instances else 0.0
        print(f"role coverage {role}: {covered} ({share:.1%})")
    return EXIT_OK


def _tagger_config(config: dict[str, str], seed) -> TaggerConfig:
    return TaggerConfig(
        embedding_dim=int(config.get("embedding_dim", 32)),
        indicator_dim=int(config.get("indicator_dim", 8)),
        hidden_dim=int(config.get("hidden_dim", 64)),
        num_encoder_layers=int(config.get("num_encoder_layers", 2)),
        beam_size=int(config.get("beam_size", 3)),
        rng_seed=seed,
        use_indicator=config.get("use_indicator", "true").lower() != "false",
    )


def cmd_pretrain(args) -> int:
    config = load_config(args.config) if args.config else {}
    seed = _pick(config, "seed", int, args.seed, 13)
    instances = corpus_io.read_instances(args.instances)
    model = tagger.init_model(_tagger_config(config, seed), tagger.build_vocab(instances))
    train_config = TrainConfig(
        epochs=_pick(config, "epochs", int, args.epochs, 30),
        batch_size=int(config.get("batch_size", 16)),
        step_size=float(config.get("step_size", 1e-3)),
        dev_fraction=float(config.get("dev_fraction", 0.1)),
        patience=int(config.get("patience", 3)),
        rng_seed=seed,
    )
    metrics_path = args.metrics or f"{args.out}.metrics.jsonl"
    metrics = mle.pretrain(model, instances, train_config, metrics_path=metrics_path)
    tagger.save_model(model, args.out)
    print(f"trained {len(metrics)} epochs; checkpoint at {args.out}")
    return EXIT_OK


def cmd_rl_train(args) -> int:
    config = load_config(args.config) if args.config else {}
    seed = _pick(config, "seed", int, args.seed, 13)
    model = tagger.load_model(args.model)
    table = _load_table(args.patterns)
    scorer = _resolve_scorer(args.scorer, args.scorer_cache)
    sentences = corpus_io.read_conllu(args.conllu)
    rl_config = RLConfig(
        epochs=_pick(config, "epochs", int, args.epochs, 10),
        beam_size=_pick(config, "beam_size", int, args.beam, 3),
        baseline_mode=_pick(config, "baseline", str, args.baseline, "mean"),
        step_size=_pick(config, "step_size", float, args.step_size, 1e-3),
        explore_mode="sample" if args.sample else "beam",
        rng_seed=seed,
    )
    dev = None
    if args.dev_conllu:
        dev_sentences = corpus_io.read_conllu(args.dev_conllu)
        dev_gold = None
        if args.dev_gold:
            dev_gold = corpus_io.read_gold(
                args.dev_gold, {s.sentence_id: s for s in dev_sentences})
        dev = (dev_sentences, dev_gold)
    metrics_path = args.metrics or f"{args.out}.metrics.jsonl"
    metrics = rl.train_rl(model, sentences, scorer, rl_config, table,
                          dev=dev, metrics_path=metrics_path)
    scorer.save_cache()
    tagger.save_model(model, args.out)
    print(f"ran {len(metrics)} epochs; checkpoint at {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    model = tagger.load_model(args.model)
    table = _load_table(args.patterns)
    scorer = None
    if args.rerank != "none":
        scorer = _resolve_scorer(args.scorer, args.scorer_cache)
    sentences = corpus_io.read_conllu(args.conllu)
    extractions = []
    for sentence in sentences:
        extractions.extend(
            tagger.extract(sentence, model, table, beam_size=args.beam,
                           sem_scorer=scorer, rerank=args.rerank)
        )
    if scorer is not None:
        scorer.save_cache()
    corpus_io.write_extractions(extractions, args.out)
    print(f"wrote {len(extractions)} extractions")
    return EXIT_OK


def cmd_eval(args) -> int:
    extractions = corpus_io.read_extractions(args.extractions)
    sentences = None
    matcher = evaluate.match
    if args.overlap_threshold is not None:
        if not args.conllu:
            raise _UsageError("--overlap-threshold requires --conllu for token surfaces")
        sentences = {s.sentence_id: s for s in corpus_io.read_conllu(args.conllu)}
        threshold = args.overlap_threshold

        def matcher(pred, gold, sentence=None):
            return evaluate.lexical_overlap_match(
                pred, gold, sentences[pred.sentence_id], threshold)

    gold = corpus_io.read_gold(args.gold, sentences)
    report = evaluate.evaluate(extractions, gold, matcher)
    evaluate.write_report(report, args.report)
    evaluate.write_pr_points(report.pr_points, args.pr_out)
    print(f"AUC: {report.auc * 100.0:.2f}")
    print(f"best F1: {report.best_f1 * 100.0:.2f}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "label": cmd_label,
    "pretrain": cmd_pretrain,
    "rl-train": cmd_rl_train,
    "extract": cmd_extract,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, NonFiniteGradient) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OiekitError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()

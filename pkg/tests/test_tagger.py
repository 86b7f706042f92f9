import itertools
import math

import numpy as np
import pytest

from oiekit.core import bio_labels, spans_from_tags, validate_bio, TagSequence, ValidationError
from oiekit.tagger import (
    EXTERNAL_CONTEXTUAL,
    HashEmbeddingProvider,
    TaggerConfig,
    beam_decode,
    build_vocab,
    confidence_avg_log,
    embed,
    encode,
    enumerate_valid_sequences,
    extract,
    forward,
    init_model,
    label_distribution,
    load_model,
    save_model,
)

from conftest import flat_sentence

TINY = TaggerConfig(embedding_dim=6, indicator_dim=3, hidden_dim=5,
                    num_encoder_layers=2, rng_seed=3)


def tiny_model(sentence, config=TINY):
    return init_model(config, build_vocab([sentence]))


# -- oracle: brute-force enumeration, independent of the decoder ------------


def oracle_valid(seq, predicate):
    prev = "O"
    p_spans = 0
    for pos, lab in enumerate(seq, start=1):
        if lab == "O":
            prev = lab
            continue
        kind, role = lab[0], lab[2:]
        if kind == "B":
            if role == "P":
                if pos != predicate:
                    return False
                p_spans += 1
        else:
            if prev == "O" or prev[2:] != role:
                return False
        prev = lab
    return p_spans <= 1


def oracle_rank(table, predicate, labels):
    logs = np.log(table)
    index = {lab: i for i, lab in enumerate(labels)}
    scored = []
    for seq in itertools.product(labels, repeat=table.shape[0]):
        if not oracle_valid(seq, predicate):
            continue
        score = 0.0
        for pos, lab in enumerate(seq):
            score = score + logs[pos, index[lab]]
        scored.append((score, seq))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return scored


def random_table(rng, m, n_labels):
    raw = rng.uniform(0.05, 1.0, (m, n_labels))
    return raw / raw.sum(axis=1, keepdims=True)


class TestEmbed:
    def test_exactly_one_position_carries_indicator(self):
        sentence = flat_sentence(3)
        model = tiny_model(sentence)
        x = embed(sentence, 2, model)
        indicator = model.params["embed.indicator"]
        assert np.array_equal(x[1, 6:], indicator[1])
        assert np.array_equal(x[0, 6:], indicator[0])
        assert np.array_equal(x[2, 6:], indicator[0])

    def test_predicate_choice_changes_only_indicator_channel(self):
        sentence = flat_sentence(4)
        model = tiny_model(sentence)
        a = embed(sentence, 1, model)
        b = embed(sentence, 3, model)
        assert np.array_equal(a[:, :6], b[:, :6])
        assert not np.array_equal(a[:, 6:], b[:, 6:])

    def test_indicator_ablation_makes_predicates_indistinguishable(self):
        sentence = flat_sentence(4)
        config = TaggerConfig(embedding_dim=6, indicator_dim=3, hidden_dim=5,
                              num_encoder_layers=1, rng_seed=3, use_indicator=False)
        model = tiny_model(sentence, config)
        assert np.array_equal(embed(sentence, 1, model), embed(sentence, 3, model))

    def test_unknown_word_uses_reserved_vector(self):
        model = tiny_model(flat_sentence(2))
        other = flat_sentence(2)
        unseen = flat_sentence(3)  # w3 not in the 2-token vocab
        x = embed(unseen, 1, model)
        assert np.array_equal(x[2, :6], model.params["embed.word"][0])

    def test_external_contextual_provider(self):
        sentence = flat_sentence(3)
        config = TaggerConfig(embedding_dim=6, indicator_dim=3, hidden_dim=5,
                              num_encoder_layers=1, rng_seed=3,
                              embedder_kind=EXTERNAL_CONTEXTUAL)
        provider = HashEmbeddingProvider(width=6, seed=1)
        model = init_model(config, [], provider=provider)
        x = embed(sentence, 2, model)
        assert x.shape == (3, 9)
        assert np.array_equal(x, embed(sentence, 2, model))

    def test_provider_width_mismatch_rejected(self):
        sentence = flat_sentence(3)
        config = TaggerConfig(embedding_dim=6, indicator_dim=3, hidden_dim=5,
                              num_encoder_layers=1, rng_seed=3,
                              embedder_kind=EXTERNAL_CONTEXTUAL)
        model = init_model(config, [], provider=HashEmbeddingProvider(width=4))
        with pytest.raises(ValidationError):
            embed(sentence, 1, model)


class TestLabelDistribution:
    def test_zero_classifier_gives_uniform(self):
        sentence = flat_sentence(3)
        model = tiny_model(sentence)
        model.params["cls.w"][...] = 0.0
        model.params["cls.b"][...] = 0.0
        probs, _ = forward(sentence, 1, model)
        assert np.allclose(probs, 1.0 / len(model.labels))

    def test_large_bias_dominates(self):
        sentence = flat_sentence(2)
        model = tiny_model(sentence)
        model.params["cls.w"][...] = 0.0
        model.params["cls.b"][...] = 0.0
        model.params["cls.b"][0] = 10.0
        probs, _ = forward(sentence, 1, model)
        # softmax(10 vs eight 0s): e^10 / (e^10 + 8) > 0.999
        assert (probs[:, 0] > 0.999).all()

    def test_rows_sum_to_one(self):
        sentence = flat_sentence(5)
        model = tiny_model(sentence)
        probs, _ = forward(sentence, 3, model)
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_single_hidden_vector(self):
        sentence = flat_sentence(2)
        model = tiny_model(sentence)
        h = encode(embed(sentence, 1, model), model)
        dist = label_distribution(h[0], model)
        assert dist.shape == (len(model.labels),)
        assert abs(dist.sum() - 1.0) < 1e-9


class TestBeamDecode:
    def test_certain_distribution_single_beam(self):
        labels = bio_labels()
        table = np.zeros((2, len(labels)))
        table[0, labels.index("B-ARG1")] = 1.0
        table[1, labels.index("B-P")] = 1.0
        result = beam_decode(table, 1, predicate=2, labels=labels)
        assert len(result) == 1
        assert result[0].labels == ("B-ARG1", "B-P")
        assert result[0].log_prob == 0.0

    def test_uniform_restricted_labels_returns_every_valid_sequence(self):
        labels = bio_labels(("P",))  # O, B-P, I-P
        table = np.full((3, 3), 1.0 / 3.0)
        result = beam_decode(table, 27, predicate=1, labels=labels)
        expected = {("O", "O", "O"), ("B-P", "O", "O"),
                    ("B-P", "I-P", "O"), ("B-P", "I-P", "I-P")}
        assert {r.labels for r in result} == expected
        for r in result:
            assert r.log_prob == pytest.approx(3 * math.log(1.0 / 3.0), abs=1e-12)

    @pytest.mark.parametrize("m,predicate", [(2, 1), (3, 2), (4, 1), (4, 3)])
    def test_full_set_matches_oracle_ranking(self, m, predicate):
        labels = bio_labels()
        rng = np.random.default_rng(100 + m + predicate)
        table = random_table(rng, m, len(labels))
        oracle = oracle_rank(table, predicate, labels)
        result = beam_decode(table, len(oracle), predicate, labels)
        assert [r.labels for r in result] == [seq for _, seq in oracle]
        for r, (score, _) in zip(result, oracle):
            assert r.log_prob == pytest.approx(score, abs=1e-9)

    def test_top3_matches_oracle_on_random_tables(self):
        labels = bio_labels()
        rng = np.random.default_rng(42)
        for trial in range(50):
            m = int(rng.integers(2, 5))
            predicate = int(rng.integers(1, m + 1))
            table = random_table(rng, m, len(labels))
            oracle = oracle_rank(table, predicate, labels)[:3]
            result = beam_decode(table, 3, predicate, labels)
            assert [r.labels for r in result] == [seq for _, seq in oracle], f"trial {trial}"

    def test_every_beam_sequence_is_bio_valid(self):
        labels = bio_labels()
        rng = np.random.default_rng(7)
        table = random_table(rng, 5, len(labels))
        for r in beam_decode(table, 10, predicate=3, labels=labels):
            assert validate_bio(r.labels) == []
            assert oracle_valid(r.labels, 3)

    def test_enumerator_counts(self):
        # Restricted to the predicate role there are exactly 4 sequences.
        assert len(enumerate_valid_sequences(3, 1, bio_labels(("P",)))) == 4


class TestConfidence:
    def test_probability_one_gives_zero(self):
        labels = bio_labels()
        table = np.zeros((2, len(labels)))
        table[0, labels.index("B-ARG1")] = 1.0
        table[1, labels.index("B-P")] = 1.0
        tags = TagSequence(("B-ARG1", "B-P"))
        assert confidence_avg_log(tags, table, labels) == 0.0

    def test_two_halves(self):
        labels = bio_labels(("P",))
        table = np.full((2, 3), 0.5)
        tags = TagSequence(("B-P", "I-P"))
        assert confidence_avg_log(tags, table, labels) == pytest.approx(math.log(0.5), abs=1e-12)

    def test_mixed_probabilities(self):
        labels = bio_labels(("P",))
        table = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.25, 0.25, 0.5]])
        tags = TagSequence(("O", "O", "O"))
        expected = (0.0 + math.log(0.5) + math.log(0.25)) / 3
        assert confidence_avg_log(tags, table, labels) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-0.6931471805599453, abs=1e-9)

    def test_length_invariance_at_equal_probability(self):
        labels = bio_labels(("P",))
        for m in (2, 5, 9):
            table = np.full((m, 3), 0.5)
            tags = TagSequence(tuple(["O"] * m))
            assert confidence_avg_log(tags, table, labels) == pytest.approx(math.log(0.5))


class TestDeterminismAndSerialization:
    def test_init_deterministic(self):
        sentence = flat_sentence(3)
        a = tiny_model(sentence)
        b = tiny_model(sentence)
        assert a.params.keys() == b.params.keys()
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])

    def test_checkpoint_round_trip_bit_exact(self, tmp_path):
        sentence = flat_sentence(4)
        model = tiny_model(sentence)
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        assert loaded.vocab == model.vocab
        assert loaded.params.keys() == model.params.keys()
        for name in model.params:
            assert loaded.params[name].tobytes() == model.params[name].tobytes()

    def test_loaded_model_decodes_identically(self, tmp_path):
        sentence = flat_sentence(4)
        model = tiny_model(sentence)
        path = tmp_path / "model.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        probs_a, _ = forward(sentence, 2, model)
        probs_b, _ = forward(sentence, 2, loaded)
        assert np.array_equal(probs_a, probs_b)


class TestExtract:
    def test_extractions_respect_core_invariants(self, parragon):
        model = init_model(TINY, build_vocab([parragon]))
        extractions = extract(parragon, model)
        assert len(extractions) <= 2
        for e in extractions:
            assert e.sentence_id == "parragon"
            spans = [e.predicate_span] + list(e.role_spans.values())
            for start, end in spans:
                assert 1 <= start <= end <= len(parragon)

    def test_rerank_needs_scorer(self, parragon):
        model = init_model(TINY, build_vocab([parragon]))
        with pytest.raises(ValidationError):
            extract(parragon, model, rerank="combined")

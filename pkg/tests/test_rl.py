import math

import numpy as np
import pytest

from oiekit import nn
from oiekit.core import TagSequence, validate_bio
from oiekit.corpus_io import gen_synthetic
from oiekit.mle import relative_error
from oiekit.reward import SemScorer
from oiekit.rl import (
    RLConfig,
    candidate_reward,
    exact_policy_gradient,
    expected_reward_oracle,
    explore,
    reinforce_step,
    train_rl,
)
from oiekit.tagger import (
    TaggerConfig,
    beam_decode,
    build_vocab,
    forward,
    init_model,
)

from conftest import flat_sentence

TINY = TaggerConfig(embedding_dim=6, indicator_dim=3, hidden_dim=5,
                    num_encoder_layers=2, rng_seed=3)
TINY_P_ONLY = TaggerConfig(embedding_dim=6, indicator_dim=3, hidden_dim=5,
                           num_encoder_layers=2, rng_seed=3, roles=("P",))


def params_snapshot(model):
    return {name: arr.copy() for name, arr in model.params.items()}


def params_equal(a, b):
    return all(np.array_equal(a[name], b[name]) for name in a)


def bias_only_model(sentence, probs_by_label, config=TINY_P_ONLY):
    """Zero classifier weights plus a log-probability bias make every
    position's label distribution equal to ``probs_by_label``."""
    model = init_model(config, build_vocab([sentence]))
    model.params["cls.w"][...] = 0.0
    model.params["cls.b"][...] = [math.log(p) for p in probs_by_label]
    return model


class TestExplore:
    def test_beam_mode_equals_beam_decode(self):
        sentence = flat_sentence(4)
        model = init_model(TINY, build_vocab([sentence]))
        probs, _ = forward(sentence, 2, model)
        assert explore(model, sentence, 2, 3) == beam_decode(probs, 3, 2, model.labels)

    def test_sampling_mode_yields_valid_sequences(self):
        sentence = flat_sentence(5)
        model = init_model(TINY, build_vocab([sentence]))
        rng = np.random.default_rng(4)
        for seq in explore(model, sentence, 3, 4, mode="sample", rng=rng):
            assert validate_bio(seq.labels) == []

    def test_sampling_deterministic_per_seed(self):
        sentence = flat_sentence(5)
        model = init_model(TINY, build_vocab([sentence]))
        a = explore(model, sentence, 3, 4, mode="sample", rng=np.random.default_rng(4))
        b = explore(model, sentence, 3, 4, mode="sample", rng=np.random.default_rng(4))
        assert a == b


class TestReinforceStep:
    def test_zero_reward_single_candidate_baseline_off(self):
        sentence = flat_sentence(3)
        model = init_model(TINY, build_vocab([sentence]))
        optimizer = nn.Adam(model.params)
        before = params_snapshot(model)
        candidates = explore(model, sentence, 2, 1)
        norm = reinforce_step(model, optimizer, sentence, 2, candidates, [0.0],
                              baseline_mode="off")
        assert norm == 0.0
        assert params_equal(before, model.params)

    def test_equal_rewards_mean_baseline_cancel(self):
        sentence = flat_sentence(3)
        model = init_model(TINY, build_vocab([sentence]))
        optimizer = nn.Adam(model.params)
        before = params_snapshot(model)
        candidates = explore(model, sentence, 2, 2)
        norm = reinforce_step(model, optimizer, sentence, 2, candidates, [0.7, 0.7],
                              baseline_mode="mean")
        assert norm == 0.0
        assert params_equal(before, model.params)

    def test_single_candidate_mean_baseline_is_frozen(self):
        sentence = flat_sentence(3)
        model = init_model(TINY, build_vocab([sentence]))
        optimizer = nn.Adam(model.params)
        before = params_snapshot(model)
        candidates = explore(model, sentence, 2, 1)
        reinforce_step(model, optimizer, sentence, 2, candidates, [0.9],
                       baseline_mode="mean")
        assert params_equal(before, model.params)

    def test_nonzero_advantage_moves_parameters(self):
        sentence = flat_sentence(3)
        model = init_model(TINY, build_vocab([sentence]))
        optimizer = nn.Adam(model.params)
        before = params_snapshot(model)
        candidates = explore(model, sentence, 2, 2)
        norm = reinforce_step(model, optimizer, sentence, 2, candidates, [1.0, -1.0],
                              baseline_mode="mean")
        assert norm > 0.0
        assert not params_equal(before, model.params)


class TestExpectedRewardOracle:
    # Distribution (O .2, B-P .5, I-P .3) at both positions, predicate 1.
    # Valid sequences and probabilities:
    #   [O, O]      .2 * .2 = .04
    #   [B-P, O]    .5 * .2 = .10
    #   [B-P, I-P]  .5 * .3 = .15

    def reward_table(self, seq):
        return {("O", "O"): 0.0, ("B-P", "O"): 0.5, ("B-P", "I-P"): -0.25}[seq.labels]

    def test_constant_one_gives_valid_mass(self):
        sentence = flat_sentence(2)
        model = bias_only_model(sentence, (0.2, 0.5, 0.3))
        mass = expected_reward_oracle(model, sentence, 1, lambda seq: 1.0)
        assert mass == pytest.approx(0.29, abs=1e-12)

    def test_constant_zero(self):
        sentence = flat_sentence(2)
        model = bias_only_model(sentence, (0.2, 0.5, 0.3))
        assert expected_reward_oracle(model, sentence, 1, lambda seq: 0.0) == 0.0

    def test_hand_arithmetic(self):
        sentence = flat_sentence(2)
        model = bias_only_model(sentence, (0.2, 0.5, 0.3))
        # .04*0 + .10*.5 + .15*(-.25) = .05 - .0375 = .0125
        value = expected_reward_oracle(model, sentence, 1, self.reward_table)
        assert value == pytest.approx(0.0125, abs=1e-9)

    def test_enumeration_bound(self):
        sentence = flat_sentence(7)
        model = init_model(TINY, build_vocab([sentence]))
        with pytest.raises(Exception):
            expected_reward_oracle(model, sentence, 1, lambda seq: 1.0)


def hand_reward(seq):
    """Deterministic, label-dependent reward spreading over [-1, 1]."""
    total = sum((i + 1) * len(lab) for i, lab in enumerate(seq.labels))
    return (total % 7) / 3.0 - 1.0


class TestPolicyGradientCorrectness:
    @pytest.mark.parametrize("predicate", [1, 2])
    def test_score_function_matches_finite_differences(self, predicate):
        sentence = flat_sentence(3)
        model = init_model(TINY, build_vocab([sentence]))
        analytic = exact_policy_gradient(model, sentence, predicate, hand_reward)
        rng = np.random.default_rng(17)
        epsilon = 1e-4
        worst = 0.0
        for name, param in model.params.items():
            flat = param.reshape(-1)
            picks = rng.choice(flat.size, size=min(4, flat.size), replace=False)
            for idx in picks:
                original = flat[idx]
                flat[idx] = original + epsilon
                plus = expected_reward_oracle(model, sentence, predicate, hand_reward)
                flat[idx] = original - epsilon
                minus = expected_reward_oracle(model, sentence, predicate, hand_reward)
                flat[idx] = original
                numeric = (plus - minus) / (2 * epsilon)
                worst = max(worst, relative_error(analytic[name].reshape(-1)[idx], numeric))
        assert worst < 1e-3


class TestTrainRl:
    def small_pretrained(self):
        sentences, _ = gen_synthetic(("svo", "coord_vp"), 30, seed=21)
        model = init_model(TaggerConfig(embedding_dim=8, indicator_dim=4, hidden_dim=8,
                                        num_encoder_layers=2, rng_seed=9),
                           build_vocab(sentences))
        return model, sentences

    def test_deterministic_per_seed(self):
        runs = []
        for _ in range(2):
            model, sentences = self.small_pretrained()
            metrics = train_rl(model, sentences, SemScorer(),
                               RLConfig(epochs=2, rng_seed=3))
            runs.append((metrics, params_snapshot(model)))
        assert runs[0][0] == runs[1][0]
        assert params_equal(runs[0][1], runs[1][1])

    def test_beam_one_with_mean_baseline_never_updates(self):
        model, sentences = self.small_pretrained()
        before = params_snapshot(model)
        train_rl(model, sentences, SemScorer(),
                 RLConfig(epochs=1, beam_size=1, baseline_mode="mean", rng_seed=3))
        assert params_equal(before, model.params)

    def test_logs_reward_components(self):
        model, sentences = self.small_pretrained()
        metrics = train_rl(model, sentences, SemScorer(), RLConfig(epochs=1, rng_seed=3))
        row = metrics[0]
        assert set(row) == {"epoch", "mean_reward", "mean_syn", "mean_sem",
                            "dev_mean_reward", "dev_f1"}
        assert -1.0 <= row["mean_reward"] <= 1.0

    def test_dev_metrics_when_gold_given(self):
        model, sentences = self.small_pretrained()
        dev_sentences, dev_gold = gen_synthetic(("svo",), 8, seed=77)
        metrics = train_rl(model, sentences, SemScorer(),
                           RLConfig(epochs=1, rng_seed=3),
                           dev=(dev_sentences, dev_gold))
        assert metrics[0]["dev_mean_reward"] is not None
        assert metrics[0]["dev_f1"] is not None


def test_candidate_without_predicate_span_gets_zero_reward(parragon):
    candidate = TagSequence(tuple(["O"] * 11))
    breakdown = candidate_reward(candidate, parragon, 2, SemScorer())
    assert breakdown.syn == -1
    assert breakdown.sem == 0.0
    assert breakdown.total == 0.0

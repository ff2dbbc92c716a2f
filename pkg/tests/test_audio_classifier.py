import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avref.audio.classifier import (
    AudioTrainConfig,
    ClipProvenance,
    OracleRecognizer,
    RecognizerPipeline,
    SoundModel,
    VoteEntry,
    evaluate_per_action,
    extract_features,
    load_sound_model,
    majority_vote,
    predict,
    save_sound_model,
    train,
)
from avref.audio.dsp import MfccMatrix, N_COEFFS
from avref.audio.synth import (
    ActionKind,
    ObjectClass,
    PROBE_SEQUENCE,
    build_dataset,
    iter_dataset,
    synthesize,
)
from avref.errors import ConfigurationError


def zero_model(hidden=4):
    model = SoundModel.init(hidden, np.random.default_rng(0))
    for arr in model.params().values():
        arr[:] = 0.0
    return model


class TestPredict:
    def test_zero_weights_uniform(self):
        model = zero_model()
        feats = MfccMatrix(np.random.default_rng(1).normal(size=(10, N_COEFFS)), np.zeros(10))
        probs = predict(model, feats)
        np.testing.assert_allclose(probs, np.full(12, 1 / 12), atol=1e-12)

    def test_fully_gated_clip_is_empty(self):
        model = zero_model()
        probs = predict(model, MfccMatrix(np.zeros((0, N_COEFFS)), np.zeros(0)))
        assert probs[ObjectClass.empty] == 1.0
        assert probs.sum() == 1.0

    def test_pipeline_silence_is_empty(self):
        from avref.audio.synth import AudioClip

        pipe = RecognizerPipeline(zero_model())
        probs = pipe.classify(AudioClip(np.zeros(32000)))
        assert probs[ObjectClass.empty] == 1.0

    def test_probabilities_sum_to_one(self):
        model = SoundModel.init(6, np.random.default_rng(3))
        feats = MfccMatrix(np.random.default_rng(2).normal(size=(20, N_COEFFS)), np.zeros(20))
        probs = predict(model, feats)
        assert abs(probs.sum() - 1.0) < 1e-12
        assert np.all(probs > 0)


def entry(cls, probs=None, action=ActionKind.yaw):
    p = np.zeros(12)
    if probs is None:
        p[cls] = 1.0
    else:
        p = np.array(probs, dtype=float)
    return VoteEntry(action, cls, p)


class TestMajorityVote:
    def test_clear_mode(self):
        entries = [entry(ObjectClass.pill), entry(ObjectClass.pill),
                   entry(ObjectClass.tablet), entry(ObjectClass.pill)]
        final, note = majority_vote(entries)
        assert final is ObjectClass.pill
        assert note == ""

    def test_two_way_tie_by_probability(self):
        def p(pill, tablet):
            v = np.full(12, 0.0)
            v[ObjectClass.pill] = pill
            v[ObjectClass.tablet] = tablet
            return v

        entries = [
            VoteEntry(ActionKind.yaw, ObjectClass.pill, p(0.8, 0.2)),
            VoteEntry(ActionKind.roll, ObjectClass.pill, p(0.7, 0.3)),
            VoteEntry(ActionKind.pitch, ObjectClass.tablet, p(0.0, 0.5)),
            VoteEntry(ActionKind.shake, ObjectClass.tablet, p(0.0, 0.3)),
        ]
        final, note = majority_vote(entries)   # sums: pill 1.5, tablet 1.3
        assert final is ObjectClass.pill
        assert "tie" in note

    def test_four_way_tie(self):
        classes = [ObjectClass.capsule, ObjectClass.alcohol,
                   ObjectClass.red_dates, ObjectClass.tablet]
        sums = [0.9, 0.8, 0.7, 0.6]
        entries = []
        for cls, s, act in zip(classes, sums, PROBE_SEQUENCE):
            v = np.zeros(12)
            v[cls] = s
            entries.append(VoteEntry(act, cls, v))
        final, _ = majority_vote(entries)
        assert final is ObjectClass.capsule

    def test_residual_tie_lowest_ordinal(self):
        entries = [entry(c) for c in (ObjectClass.tablet, ObjectClass.tablet,
                                      ObjectClass.alcohol, ObjectClass.alcohol)]
        final, note = majority_vote(entries)   # equal counts, equal sums
        assert final is ObjectClass.alcohol    # ordinal 1 < tablet 3
        assert "ordinal" in note

    def test_requires_exactly_four(self):
        with pytest.raises(ConfigurationError):
            majority_vote([entry(ObjectClass.pill)] * 3)

    @given(st.permutations(range(4)))
    @settings(max_examples=24, deadline=None)
    def test_permutation_invariance(self, order):
        rng = np.random.default_rng(7)
        entries = []
        for act in PROBE_SEQUENCE:
            probs = rng.dirichlet(np.ones(12))
            entries.append(VoteEntry(act, ObjectClass(int(np.argmax(probs))), probs))
        base, _ = majority_vote(entries)
        shuffled, _ = majority_vote([entries[i] for i in order])
        assert shuffled is base


class TestTraining:
    @pytest.fixture(scope="class")
    def tiny_corpus(self):
        return list(iter_dataset(77, 3))

    def test_missing_class_rejected(self):
        records = [r for r in iter_dataset(0, 2) if r.true_class != ObjectClass.pill]
        with pytest.raises(ConfigurationError, match="pill"):
            train(records, AudioTrainConfig(hidden=4, epochs=1), seed=0)

    def test_loss_decreases(self, tiny_corpus):
        _, curve, _ = train(tiny_corpus, AudioTrainConfig(hidden=8, epochs=5), seed=1)
        assert curve[-1][1] < curve[0][1]

    def test_deterministic(self, tiny_corpus):
        cfg = AudioTrainConfig(hidden=4, epochs=1)
        m1, _, _ = train(tiny_corpus, cfg, seed=2)
        m2, _, _ = train(tiny_corpus, cfg, seed=2)
        for (n1, a), (n2, b) in zip(sorted(m1.params().items()), sorted(m2.params().items())):
            assert a.tobytes() == b.tobytes()

    def test_label_shuffle_chance_level(self, tiny_corpus):
        X, labels, _, _, _ = extract_features(tiny_corpus)
        rng = np.random.default_rng(3)
        shuffled = labels.copy()
        rng.shuffle(shuffled)
        model, _, _ = train((X, shuffled), AudioTrainConfig(hidden=8, epochs=2), seed=3)
        from avref.audio.classifier import predict_many

        probs = predict_many(model, X)
        acc = float(np.mean(np.argmax(probs, axis=1) == labels))
        assert acc < 1 / 12 + 0.15

    def test_checkpoint_roundtrip_and_resume_counter(self, tiny_corpus, tmp_path):
        cfg = AudioTrainConfig(hidden=4, epochs=1)
        model, _, opt = train(tiny_corpus, cfg, seed=4)
        path = tmp_path / "audio.npz"
        save_sound_model(path, model, opt)
        loaded, opt2 = load_sound_model(path)
        assert opt2.step == opt.step > 0
        for (n1, a), (n2, b) in zip(sorted(model.params().items()),
                                    sorted(loaded.params().items())):
            assert a.tobytes() == b.tobytes()
        X, labels, _, _, _ = extract_features(tiny_corpus)
        _, _, opt3 = train((X, labels), cfg, seed=4, init=(loaded, opt2))
        assert opt3.step == 2 * opt.step


class TestEvaluatePerAction:
    def test_oracle_recognizer_scores_all_cells_at_one(self):
        records = build_dataset(5, 2)
        table = evaluate_per_action(OracleRecognizer(), records)
        for cls in ObjectClass:
            for col in table.COLUMNS:
                assert table.accuracy[cls][col] == 1.0
        assert table.excluded_episodes == 0
        assert np.trace(table.confusion) == table.confusion.sum()

    def test_incomplete_episode_excluded(self):
        records = [r for r in build_dataset(6, 2)
                   if not (r.true_class == ObjectClass.pill and r.rep == 0
                           and r.action == ActionKind.yaw)]
        table = evaluate_per_action(OracleRecognizer(), records)
        assert table.excluded_episodes == 1

    def test_csv_layout(self):
        records = build_dataset(7, 1)
        table = evaluate_per_action(OracleRecognizer(), records)
        csv = table.to_csv()
        lines = csv.strip().split("\n")
        assert lines[0] == "class,all_actions,pitch,yaw,roll,shake"
        assert len(lines) == 14  # header + 12 classes + Average
        assert lines[-1].startswith("Average,")

    def test_oracle_requires_provenance(self):
        clip = synthesize(ObjectClass.pill, ActionKind.yaw, 0.5, 0)
        with pytest.raises(ConfigurationError):
            OracleRecognizer().classify(clip, None)
        probs = OracleRecognizer().classify(
            clip, ClipProvenance(ObjectClass.oyster, ActionKind.yaw, 0.5, 0)
        )
        assert probs[ObjectClass.oyster] == 1.0

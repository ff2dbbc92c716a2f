import numpy as np
import pytest

from avref.audio.synth import (
    ActionKind,
    AudioClip,
    FILL_RANGE,
    GRANULAR_CLASSES,
    ObjectClass,
    PROBE_SEQUENCE,
    SynthProfile,
    add_robot_noise,
    build_dataset,
    iter_dataset,
    read_wav,
    synthesize,
    write_wav,
)
from avref.errors import ConfigurationError, DomainError


class TestEnums:
    def test_twelve_classes_stable_ordinals(self):
        assert len(ObjectClass) == 12
        assert ObjectClass.capsule == 0
        assert ObjectClass.empty == 11

    def test_probing_subset(self):
        assert len(PROBE_SEQUENCE) == 4
        assert [a.name for a in PROBE_SEQUENCE] == ["yaw", "roll", "pitch", "shake"]
        assert set(PROBE_SEQUENCE) < set(ActionKind)


class TestSynthesize:
    def test_empty_bottle_is_quiet(self):
        for seed in (0, 1, 2):
            clip = synthesize(ObjectClass.empty, ActionKind.shake, 0.5, seed)
            assert clip.rms() < 0.02

    def test_deterministic(self):
        a = synthesize(ObjectClass.pill, ActionKind.yaw, 0.4, 123)
        b = synthesize(ObjectClass.pill, ActionKind.yaw, 0.4, 123)
        assert np.array_equal(a.samples, b.samples)

    def test_shake_fires_more_events_than_roll(self):
        # Monte-Carlo proxy for the event rate: count bursts via energy
        def mean_rms(action):
            vals = [
                synthesize(ObjectClass.pill, action, 0.5, seed).rms() for seed in range(50)
            ]
            return float(np.mean(vals))

        assert mean_rms(ActionKind.shake) > mean_rms(ActionKind.roll)

    def test_profile_rate_law_monotone(self):
        profile = SynthProfile.default()
        for cls in GRANULAR_CLASSES:
            shake = profile.event_rate(cls, ActionKind.shake, 0.5)
            yaw = profile.event_rate(cls, ActionKind.yaw, 0.5)
            roll = profile.event_rate(cls, ActionKind.roll, 0.5)
            assert shake >= yaw >= roll

    def test_fill_pitch_law_decreasing(self):
        profile = SynthProfile.default()
        fills = np.linspace(*FILL_RANGE, 7)
        for cls in GRANULAR_CLASSES:
            freqs = [profile.resonance(cls, f) for f in fills]
            assert all(a > b for a, b in zip(freqs, freqs[1:]))

    def test_fill_rate_law_increasing(self):
        profile = SynthProfile.default()
        assert profile.fill_rate_factor(0.8) > profile.fill_rate_factor(0.2)

    def test_invalid_fill(self):
        with pytest.raises(DomainError):
            synthesize(ObjectClass.pill, ActionKind.shake, 0.1, 0)

    def test_non_probing_action_rejected(self):
        with pytest.raises(DomainError):
            synthesize(ObjectClass.pill, ActionKind.pick, 0.5, 0)

    def test_weak_classes_below_every_granular(self):
        weak = []
        granular = []
        for seed in range(12):
            for cls in (ObjectClass.cicada_slough, ObjectClass.empty):
                weak.append(synthesize(cls, ActionKind.shake, 0.5, seed).rms())
            for cls in GRANULAR_CLASSES:
                granular.append(synthesize(cls, ActionKind.shake, 0.5, seed).rms())
        assert max(weak) < min(granular)

    def test_no_clipping(self):
        for cls in ObjectClass:
            clip = synthesize(cls, ActionKind.shake, 0.8, 99)
            assert np.max(np.abs(clip.samples)) <= 1.0

    def test_empty_profile_near_silent_validation(self):
        profile = SynthProfile.default()
        profile.validate()
        granular_rates = [
            profile.classes[c].rate_per_s for c in GRANULAR_CLASSES
        ]
        assert profile.classes[ObjectClass.empty].rate_per_s < min(granular_rates)


class TestRobotNoise:
    def test_infinite_snr_identity(self):
        clip = synthesize(ObjectClass.tablet, ActionKind.yaw, 0.5, 4)
        out = add_robot_noise(clip, float("inf"), 9)
        assert np.array_equal(out.samples, clip.samples)

    def test_snr_definition(self):
        # square wave: exact RMS = amplitude, with headroom for the noise
        t = np.arange(32000)
        clip = AudioClip(np.where(np.sin(2 * np.pi * 200 * t / 16000) >= 0, 0.5, -0.5))
        assert clip.rms() == pytest.approx(0.5)
        out = add_robot_noise(clip, 10.0, 3)
        noise_rms = float(np.sqrt(np.mean((out.samples - clip.samples) ** 2)))
        expected = 0.5 * 0.316227766  # rms / 10^(10 dB / 20)
        assert abs(noise_rms - expected) / expected < 0.05

    def test_hum_peak_in_band(self):
        silence = AudioClip(np.zeros(32000))
        out = add_robot_noise(silence, 10.0, 5)
        spec = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(len(out.samples), d=1 / out.rate)
        peak = freqs[np.argmax(spec)]
        assert 50.0 <= peak <= 300.0

    def test_absolute_floor_for_quiet_clips(self):
        silence = AudioClip(np.zeros(32000))
        out = add_robot_noise(silence, 10.0, 5)
        assert abs(out.rms() - 0.01) / 0.01 < 0.05


class TestDataset:
    def test_paper_protocol_count(self):
        records = build_dataset(0, 20)
        assert len(records) == 960

    def test_class_balance(self):
        records = build_dataset(1, 3)
        counts = {}
        for r in records:
            counts[r.true_class] = counts.get(r.true_class, 0) + 1
        assert all(v == 12 for v in counts.values())

    def test_fill_shared_within_episode(self):
        records = build_dataset(2, 2)
        by_ep = {}
        for r in records:
            by_ep.setdefault((r.true_class, r.rep), set()).add(r.fill)
        assert all(len(v) == 1 for v in by_ep.values())
        for r in records:
            assert FILL_RANGE[0] <= r.fill <= FILL_RANGE[1]

    def test_master_seeds_give_disjoint_samples(self):
        h1 = {r.clip.content_hash() for r in iter_dataset(10, 2, classes=(ObjectClass.pill,))}
        h2 = {r.clip.content_hash() for r in iter_dataset(11, 2, classes=(ObjectClass.pill,))}
        assert not (h1 & h2)

    def test_repetitions_validated(self):
        with pytest.raises(ConfigurationError):
            build_dataset(0, 0)


class TestWavIo:
    def test_roundtrip(self, tmp_path):
        clip = synthesize(ObjectClass.oyster, ActionKind.pitch, 0.6, 17)
        path = tmp_path / "clip.wav"
        write_wav(path, clip)
        back = read_wav(path)
        assert back.rate == clip.rate
        assert len(back.samples) == len(clip.samples)
        assert np.max(np.abs(back.samples - clip.samples)) < 1.0 / 32000

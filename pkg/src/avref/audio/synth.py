"""Parametric synthesis of bottle-content sounds.

Each of the 12 content classes gets a physically-motivated waveform family:

* granular contents (pills, tablets, dates, ...) are Poisson-timed trains of
  decaying sinusoid impacts with a class-specific resonance, decay, and rate;
* liquid (alcohol) is band-limited noise amplitude-modulated at the motion
  period;
* cicada slough and the empty bottle emit almost nothing, so once robot
  noise is mixed in they are genuinely hard to tell apart.

Probing actions modulate the excitation: shake fires the most events, roll
the fewest, and every action imprints its own motion period on the event
timing.  Filling a bottle raises the event rate and lowers the resonance.
All randomness flows through one seed per clip.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from ..errors import ConfigurationError, DomainError
from ..seeding import derive_seed

SAMPLE_RATE = 16000
CLIP_SECONDS = 2.0
FILL_RANGE = (0.2, 0.8)
# Wrist angular speed carried as episode metadata; the half-turn time sets
# the ~1 Hz motion period used by the yaw/roll/pitch excitation envelopes.
HAND_ANGULAR_VELOCITY = 3.14


class ObjectClass(enum.IntEnum):
    capsule = 0
    alcohol = 1
    red_dates = 2
    tablet = 3
    hawthorn = 4
    pill = 5
    seman_cassiae = 6
    oyster = 7
    wax_pill = 8
    cicada_slough = 9
    particle = 10
    empty = 11


class ActionKind(enum.IntEnum):
    pick = 0
    yaw = 1
    roll = 2
    pitch = 3
    shake = 4
    place = 5


# The four sound-eliciting wrist motions, in execution order.
PROBE_SEQUENCE = (ActionKind.yaw, ActionKind.roll, ActionKind.pitch, ActionKind.shake)

GRANULAR_CLASSES = (
    ObjectClass.capsule,
    ObjectClass.red_dates,
    ObjectClass.tablet,
    ObjectClass.hawthorn,
    ObjectClass.pill,
    ObjectClass.seman_cassiae,
    ObjectClass.oyster,
    ObjectClass.wax_pill,
    ObjectClass.particle,
)
WEAK_CLASSES = (ObjectClass.cicada_slough, ObjectClass.empty)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    rate: int = SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1:
            raise ConfigurationError("clips are mono 1-D sample arrays")
        if np.max(np.abs(self.samples), initial=0.0) > 1.0 + 1e-12:
            raise ConfigurationError("samples clip beyond +-1")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.rate

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def content_hash(self) -> str:
        return hashlib.sha256(self.samples.tobytes()).hexdigest()


@dataclass(frozen=True)
class ClassProfile:
    """Excitation parameters for one content class."""

    family: str                # granular | liquid | weak
    resonance_hz: float
    decay_s: float
    rate_per_s: float          # expected impact events per second at yaw=1x
    amp: float
    freq_jitter: float = 0.04  # relative per-event resonance spread
    partial_ratio: float = 2.41
    partial_amp: float = 0.35
    broadband: float = 0.0     # continuous noise bed level
    slosh_depth: float = 0.0   # liquid AM depth at fill=0.5


@dataclass(frozen=True)
class ActionDynamics:
    rate_mult: float
    loudness: float
    motion_hz: float


@dataclass
class SynthProfile:
    """Full synthesis parameter table plus the fill laws."""

    classes: dict = field(default_factory=dict)
    actions: dict = field(default_factory=dict)

    @staticmethod
    def default() -> "SynthProfile":
        # Granular resonances are spaced by >= 1.31x so the +-12% fill pitch
        # shift never makes neighbors overlap; cicada slough and the empty
        # bottle share the faint high-frequency band on purpose.
        p = SynthProfile()
        c = p.classes
        c[ObjectClass.oyster] = ClassProfile("granular", 380.0, 0.055, 4.0, 0.45)
        c[ObjectClass.red_dates] = ClassProfile("granular", 500.0, 0.045, 5.0, 0.40)
        c[ObjectClass.hawthorn] = ClassProfile("granular", 655.0, 0.040, 7.0, 0.42)
        c[ObjectClass.capsule] = ClassProfile("granular", 860.0, 0.030, 9.0, 0.32)
        c[ObjectClass.wax_pill] = ClassProfile("granular", 1130.0, 0.035, 6.0, 0.38)
        c[ObjectClass.pill] = ClassProfile("granular", 1480.0, 0.022, 12.0, 0.36)
        c[ObjectClass.tablet] = ClassProfile("granular", 1940.0, 0.018, 16.0, 0.34)
        c[ObjectClass.seman_cassiae] = ClassProfile("granular", 2550.0, 0.010, 45.0, 0.22)
        c[ObjectClass.particle] = ClassProfile("granular", 3340.0, 0.008, 60.0, 0.20)
        c[ObjectClass.alcohol] = ClassProfile(
            "liquid", 550.0, 0.0, 0.0, 0.11, broadband=0.012, slosh_depth=0.55
        )
        c[ObjectClass.cicada_slough] = ClassProfile(
            "weak", 4300.0, 0.006, 2.2, 0.015, freq_jitter=0.22
        )
        c[ObjectClass.empty] = ClassProfile("weak", 4000.0, 0.007, 1.45, 0.0135, freq_jitter=0.30)
        a = p.actions
        a[ActionKind.yaw] = ActionDynamics(rate_mult=1.2, loudness=1.0, motion_hz=1.0)
        a[ActionKind.roll] = ActionDynamics(rate_mult=0.8, loudness=0.85, motion_hz=0.7)
        a[ActionKind.pitch] = ActionDynamics(rate_mult=1.15, loudness=1.0, motion_hz=1.1)
        a[ActionKind.shake] = ActionDynamics(rate_mult=2.0, loudness=1.25, motion_hz=2.8)
        p.validate()
        return p

    def validate(self) -> None:
        for cls in ObjectClass:
            if cls not in self.classes:
                raise ConfigurationError(f"no profile for {cls.name}")
        for act in PROBE_SEQUENCE:
            if act not in self.actions:
                raise ConfigurationError(f"no dynamics for {act.name}")
        shake = self.actions[ActionKind.shake].rate_mult
        if any(self.actions[a].rate_mult > shake for a in PROBE_SEQUENCE):
            raise ConfigurationError("shake must have the highest event rate")
        empty = self.classes[ObjectClass.empty]
        granular_rates = [cp.rate_per_s for cp in self.classes.values() if cp.family == "granular"]
        if empty.rate_per_s > 2.0 or empty.rate_per_s >= min(granular_rates) or empty.amp > 0.02:
            raise ConfigurationError("empty bottle must stay near-silent")

    # --- parametric laws (asserted by property tests) ---

    def event_rate(self, cls: ObjectClass, action: ActionKind, fill: float) -> float:
        """Expected impact events per second for one clip."""
        return (
            self.classes[cls].rate_per_s
            * self.actions[action].rate_mult
            * self.fill_rate_factor(fill)
        )

    def resonance(self, cls: ObjectClass, fill: float) -> float:
        return self.classes[cls].resonance_hz * self.fill_pitch_factor(fill)

    @staticmethod
    def fill_rate_factor(fill: float) -> float:
        return 0.5 + fill

    @staticmethod
    def fill_pitch_factor(fill: float) -> float:
        # Fuller bottle, lower rattle pitch.
        return 1.2 - 0.4 * fill


def _check_fill(fill: float) -> float:
    if not (FILL_RANGE[0] <= fill <= FILL_RANGE[1]):
        raise DomainError(f"fill {fill} outside {FILL_RANGE}")
    return float(fill)


def _render_impacts(n_samples, rate, events, rng, profile: ClassProfile, res_hz, loudness):
    """Sum decaying two-partial sinusoid bursts at the given event times."""
    out = np.zeros(n_samples)
    starts = (np.asarray(events) * rate).astype(int)
    starts = starts[starts < n_samples]
    n_ev = len(starts)
    if n_ev == 0:
        return out
    decay = max(profile.decay_s, 1e-4)
    seg_len = min(n_samples, max(8, int(6.0 * decay * rate)))
    t = np.arange(seg_len) / rate
    env = np.exp(-t / decay)
    freqs = res_hz * (1.0 + profile.freq_jitter * rng.standard_normal(n_ev))
    amps = profile.amp * loudness * rng.lognormal(mean=0.0, sigma=0.25, size=n_ev)
    ph1 = rng.uniform(0.0, 2 * np.pi, size=n_ev)
    ph2 = rng.uniform(0.0, 2 * np.pi, size=n_ev)
    arg = 2 * np.pi * freqs[:, None] * t[None, :]
    burst = env[None, :] * (
        np.sin(arg + ph1[:, None])
        + profile.partial_amp * np.sin(profile.partial_ratio * arg + ph2[:, None])
    )
    burst *= amps[:, None]
    idx = starts[:, None] + np.arange(seg_len)[None, :]
    keep = idx < n_samples
    out += np.bincount(idx[keep], weights=burst[keep], minlength=n_samples)
    return out


def _poisson_times(rng, mean_rate, duration, motion_hz):
    """Inhomogeneous Poisson times clustered at the motion reversals."""
    lam_max = mean_rate / 0.675  # 0.675 = mean of the modulation below
    n = rng.poisson(lam_max * duration)
    times = np.sort(rng.uniform(0.0, duration, size=n))
    phase = rng.uniform(0.0, 2 * np.pi)
    mod = 0.35 + 0.65 * (0.5 + 0.5 * np.sin(2 * np.pi * motion_hz * times + phase))
    keep = rng.uniform(size=n) < mod
    return times[keep]


def _band_noise(n_samples, rate, lo_hz, hi_hz, rng):
    """Unit-RMS noise restricted to [lo, hi] Hz with raised-cosine skirts."""
    white = rng.standard_normal(n_samples)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / rate)
    gain = np.zeros_like(freqs)
    skirt = 0.2 * (hi_hz - lo_hz)
    inside = (freqs >= lo_hz) & (freqs <= hi_hz)
    gain[inside] = 1.0
    lo_sk = (freqs >= lo_hz - skirt) & (freqs < lo_hz)
    gain[lo_sk] = 0.5 - 0.5 * np.cos(np.pi * (freqs[lo_sk] - (lo_hz - skirt)) / skirt)
    hi_sk = (freqs > hi_hz) & (freqs <= hi_hz + skirt)
    gain[hi_sk] = 0.5 + 0.5 * np.cos(np.pi * (freqs[hi_sk] - hi_hz) / skirt)
    shaped = np.fft.irfft(spec * gain, n=n_samples)
    rms = np.sqrt(np.mean(shaped**2))
    return shaped / max(rms, 1e-12)


def synthesize(cls: ObjectClass, action: ActionKind, fill: float, seed: int,
               profile: SynthProfile | None = None,
               rate: int = SAMPLE_RATE, duration: float = CLIP_SECONDS) -> AudioClip:
    """Render one probing clip; identical arguments give identical samples."""
    fill = _check_fill(fill)
    if action not in PROBE_SEQUENCE:
        raise DomainError(f"{action.name} is not a sound-eliciting action")
    profile = profile or SynthProfile.default()
    cp = profile.classes[cls]
    dyn = profile.actions[action]
    rng = np.random.default_rng(seed)
    n = int(round(rate * duration))

    if cp.family == "liquid":
        depth = min(0.95, cp.slosh_depth * (0.5 + fill))
        phase = rng.uniform(0.0, 2 * np.pi)
        t = np.arange(n) / rate
        am = (1.0 - depth) + depth * (0.5 + 0.5 * np.sin(2 * np.pi * dyn.motion_hz * t + phase)) ** 1.5
        body = _band_noise(n, rate, cp.resonance_hz * 0.55, cp.resonance_hz * 1.65, rng)
        out = cp.amp * dyn.loudness * (0.3 + fill) * am * body
        out += cp.broadband * rng.standard_normal(n)
    else:
        events = _poisson_times(rng, profile.event_rate(cls, action, fill), duration, dyn.motion_hz)
        out = _render_impacts(n, rate, events, rng, cp, profile.resonance(cls, fill), dyn.loudness)
        if cp.broadband > 0.0:
            out += cp.broadband * rng.standard_normal(n)

    peak = np.max(np.abs(out), initial=0.0)
    if peak > 0.98:
        out *= 0.98 / peak
    return AudioClip(out, rate)


def add_robot_noise(clip: AudioClip, snr_db: float, seed: int,
                    weak_rms_threshold: float = 1e-3,
                    weak_noise_rms: float = 0.01) -> AudioClip:
    """Mix in arm-motor noise: low-frequency hum plus a broadband floor.

    Noise RMS is set so the clip-to-noise power ratio equals ``snr_db``;
    clips too quiet for a meaningful ratio get an absolute noise floor
    instead.  ``snr_db = inf`` returns the clip untouched.
    """
    if not np.isfinite(snr_db):
        if np.isnan(snr_db):
            raise DomainError("snr must not be NaN")
        return clip
    rng = np.random.default_rng(seed)
    n = len(clip.samples)
    t = np.arange(n) / clip.rate

    k = 3
    f = rng.uniform(50.0, 300.0, size=k)
    ph = rng.uniform(0.0, 2 * np.pi, size=k)
    wob_f = rng.uniform(0.3, 1.2, size=k)
    wob_ph = rng.uniform(0.0, 2 * np.pi, size=k)
    gains = rng.uniform(0.5, 1.0, size=k)
    wobble = 1.0 + 0.15 * np.sin(2 * np.pi * wob_f[:, None] * t[None, :] + wob_ph[:, None])
    hum = (gains[:, None] * wobble * np.sin(2 * np.pi * f[:, None] * t[None, :] + ph[:, None])).sum(axis=0)
    hum /= max(np.sqrt(np.mean(hum**2)), 1e-12)
    broadband = rng.standard_normal(n)

    noise = np.sqrt(0.75) * hum + np.sqrt(0.25) * broadband
    noise /= max(np.sqrt(np.mean(noise**2)), 1e-12)

    clip_rms = clip.rms()
    if clip_rms < weak_rms_threshold:
        target = weak_noise_rms
    else:
        target = clip_rms / (10.0 ** (snr_db / 20.0))
    mixed = np.clip(clip.samples + target * noise, -1.0, 1.0)
    return AudioClip(mixed, clip.rate)


@dataclass(frozen=True)
class ClipRecord:
    clip: AudioClip
    true_class: ObjectClass
    action: ActionKind
    fill: float
    rep: int
    seed: int


def iter_dataset(master_seed: int, repetitions: int,
                 classes=tuple(ObjectClass), actions=PROBE_SEQUENCE,
                 snr_db: float = 12.0, profile: SynthProfile | None = None,
                 rate: int = SAMPLE_RATE, duration: float = CLIP_SECONDS):
    """Yield clip records for classes x actions x repetitions.

    The fill fraction is drawn once per (class, repetition) so the four
    actions of one repetition probe the same bottle, mirroring one probing
    episode.  Record seeds derive from the master seed, so two corpora with
    different master seeds share no sample values.
    """
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    profile = profile or SynthProfile.default()
    for cls in classes:
        for rep in range(repetitions):
            fill_rng = np.random.default_rng(derive_seed(master_seed, "fill", cls.name, rep))
            fill = float(fill_rng.uniform(*FILL_RANGE))
            for action in actions:
                seed = derive_seed(master_seed, "clip", cls.name, action.name, rep)
                clip = synthesize(cls, action, fill, seed, profile, rate, duration)
                clip = add_robot_noise(clip, snr_db, derive_seed(master_seed, "noise", cls.name, action.name, rep))
                yield ClipRecord(clip, cls, action, fill, rep, seed)


def build_dataset(master_seed: int, repetitions: int, **kwargs) -> list:
    """Materialized corpus; the 20-repetition protocol set has 960 records."""
    return list(iter_dataset(master_seed, repetitions, **kwargs))


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(str(path), clip.rate, pcm)


def read_wav(path) -> AudioClip:
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ConfigurationError("expected mono wave file")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    else:
        samples = np.asarray(data, dtype=np.float64)
    return AudioClip(np.clip(samples, -1.0, 1.0), int(rate))

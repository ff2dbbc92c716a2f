"""MFCC front end and the envelope noise gate.

The cepstral pipeline: pre-emphasis (0.97), Hamming windows of 30 ms hopped
by 15 ms, periodogram power spectrum, a 40-filter triangular Mel bank from
0 Hz to Nyquist, log with a 1e-10 floor, and a DCT-II keeping coefficients
0..20.  Frame count obeys floor((N - W) / H) + 1.

The gate estimates a moving-RMS envelope on short non-overlapping windows
and zeroes windows that sit below 1.5x the median envelope.  Two guards keep
the median rule sane at the extremes: an absolute silence floor (digital
silence is always gated) and a peak guard that never gates windows within
half of the loudest envelope, so a constant-amplitude signal passes through
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fftpack import dct

from ..errors import DspError
from .synth import AudioClip

WINDOW_S = 0.030
HOP_S = 0.015
N_MEL_FILTERS = 40
N_COEFFS = 21
PRE_EMPHASIS = 0.97
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class MfccMatrix:
    coeffs: np.ndarray       # (frames, 21)
    frame_times: np.ndarray  # frame-center seconds

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[0]


def frame_count(n_samples: int, rate: int) -> int:
    w = int(round(WINDOW_S * rate))
    h = int(round(HOP_S * rate))
    if n_samples < w:
        raise DspError(f"too short: {n_samples} samples < one {w}-sample window")
    return (n_samples - w) // h + 1


def _next_pow2(n: int) -> int:
    nfft = 1
    while nfft < n:
        nfft *= 2
    return nfft


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, rate: int,
                   low_hz: float = 0.0, high_hz: float | None = None) -> np.ndarray:
    """Triangular filters on a Mel-spaced grid; rows are filters over rfft bins."""
    high_hz = high_hz if high_hz is not None else rate / 2.0
    points = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_filters + 2)
    bins = np.floor((nfft + 1) * mel_to_hz(points) / rate).astype(int)
    fb = np.zeros((n_filters, nfft // 2 + 1))
    for j in range(n_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            fb[j, i] = (i - left) / max(center - left, 1)
        for i in range(center, right):
            fb[j, i] = (right - i) / max(right - center, 1)
    return fb


def _frames(signal: np.ndarray, w: int, h: int) -> np.ndarray:
    n_frames = (len(signal) - w) // h + 1
    idx = np.arange(w)[None, :] + h * np.arange(n_frames)[:, None]
    return signal[idx]


def mel_energies(clip: AudioClip):
    """Per-frame Mel filterbank energies (frames, n_filters); pre-log."""
    x = clip.samples
    rate = clip.rate
    w = int(round(WINDOW_S * rate))
    h = int(round(HOP_S * rate))
    if len(x) < w:
        raise DspError(f"too short: {len(x)} samples < one {w}-sample window")
    emphasized = np.concatenate([x[:1], x[1:] - PRE_EMPHASIS * x[:-1]])
    frames = _frames(emphasized, w, h) * np.hamming(w)
    nfft = _next_pow2(w)
    pspec = (np.abs(np.fft.rfft(frames, nfft, axis=1)) ** 2) / nfft
    fb = mel_filterbank(N_MEL_FILTERS, nfft, rate)
    return pspec @ fb.T


def mfcc(clip: AudioClip) -> MfccMatrix:
    """21 Mel-cepstral coefficients per 30 ms frame."""
    energies = mel_energies(clip)
    logs = np.log(np.maximum(energies, LOG_FLOOR))
    coeffs = dct(logs, type=2, axis=1, norm="ortho")[:, :N_COEFFS]
    rate = clip.rate
    w = int(round(WINDOW_S * rate))
    h = int(round(HOP_S * rate))
    times = (np.arange(coeffs.shape[0]) * h + w / 2.0) / rate
    return MfccMatrix(coeffs, times)


@dataclass(frozen=True)
class GateConfig:
    window_s: float = 0.010
    median_factor: float = 1.5
    silence_floor: float = 1e-4
    peak_guard: float = 0.5
    min_span_frames: int = 2

    def __post_init__(self):
        if self.median_factor <= 0:
            raise DspError("median factor must be positive")


@dataclass(frozen=True)
class GateResult:
    clip: AudioClip
    frame_mask: np.ndarray   # True = envelope window retained
    sample_mask: np.ndarray  # per-sample expansion of frame_mask
    window_samples: int

    @property
    def fully_gated(self) -> bool:
        return not bool(np.any(self.frame_mask))


def noise_gate(clip: AudioClip, config: GateConfig | None = None) -> GateResult:
    """Zero every envelope window below the threshold; return clip + mask."""
    config = config or GateConfig()
    x = clip.samples
    wlen = max(1, int(round(config.window_s * clip.rate)))
    n_win = max(1, int(np.ceil(len(x) / wlen)))
    padded = np.zeros(n_win * wlen)
    padded[: len(x)] = x
    env = np.sqrt(np.mean(padded.reshape(n_win, wlen) ** 2, axis=1))
    if len(x) % wlen:
        # the final partial window averages only its real samples
        tail = x[(n_win - 1) * wlen :]
        env[-1] = np.sqrt(np.mean(tail**2)) if len(tail) else 0.0

    med = float(np.median(env))
    peak = float(np.max(env))
    retained = (env >= config.silence_floor) & (
        (env >= config.median_factor * med) | (env >= config.peak_guard * peak)
    )

    # Drop retained runs shorter than the minimum span.
    if config.min_span_frames > 1:
        run_start = None
        for i in range(n_win + 1):
            on = i < n_win and retained[i]
            if on and run_start is None:
                run_start = i
            elif not on and run_start is not None:
                if i - run_start < config.min_span_frames:
                    retained[run_start:i] = False
                run_start = None

    sample_mask = np.repeat(retained, wlen)[: len(x)]
    gated = np.where(sample_mask, x, 0.0)
    return GateResult(AudioClip(gated, clip.rate), retained, sample_mask, wlen)


def retained_mfcc_frames(gate: GateResult, rate: int) -> np.ndarray:
    """Which MFCC frames overlap any retained sample (for frame-drop mode)."""
    n = len(gate.clip.samples)
    w = int(round(WINDOW_S * rate))
    h = int(round(HOP_S * rate))
    n_frames = (n - w) // h + 1 if n >= w else 0
    keep = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        keep[i] = bool(np.any(gate.sample_mask[i * h : i * h + w]))
    return keep

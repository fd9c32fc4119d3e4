"""Deterministic toy heart-sound corpora.

A normal recording is a train of S1/S2 pulse pairs: damped sinusoids whose
pitch (30-80 Hz for S1, 60-150 Hz for S2) is fixed per recording, with an
abrupt onset that adds a broadband valve click. Beat amplitude follows a
slow respiratory envelope; heart rate, pitch and amplitude carry
per-recording jitter and white noise is added at about 20 dB SNR.
Abnormal recordings add one pathology on top of the same base signal:

* ``murmur``: 250-700 Hz noise filling the systolic gap between S1 and S2,
  with an intensity that varies from cycle to cycle
* ``extra_sound``: a third low-frequency pulse after S2
* ``arrhythmia``: cycle lengths perturbed by 25-50 %

The base signal of recording ``i`` is drawn from its own RNG stream,
identical for the normal and abnormal variants, so abnormal recordings can
be paired with a normal twin.

The per-band z-scoring downstream removes stationary level differences, so
a pathology is only visible to the model if it changes how bands co-vary
over time; the murmur's cycle-to-cycle intensity is what provides that.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataset import Label, Recording

_ATTACK = 0.0005
_RATE_JITTER = 0.03
_PITCH_JITTER = 0.05
_BEAT_JITTER = 0.05
_RESP_DEPTH = 0.8
_MURMUR_BAND = (250.0, 700.0)
_MURMUR_LEVEL = 3.0
_MURMUR_PRESENCE = 0.6


class Anomaly(str, enum.Enum):
    MURMUR = "murmur"
    EXTRA_SOUND = "extra_sound"
    ARRHYTHMIA = "arrhythmia"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    count_normal: int = 50
    count_abnormal: int = 50
    duration_seconds: float = 8.0
    sample_rate: int = 2000
    heart_rate_bpm: tuple[float, float] = (60.0, 100.0)
    anomaly_kind: Anomaly = Anomaly.MURMUR
    snr_db: float = 20.0

    def __post_init__(self):
        if self.count_normal < 0 or self.count_abnormal < 0:
            raise ValueError("counts must be >= 0")
        if self.duration_seconds <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample rate must be positive")
        lo, hi = self.heart_rate_bpm
        if not 0 < lo <= hi:
            raise ValueError("heart_rate_bpm must be an increasing positive range")
        object.__setattr__(self, "heart_rate_bpm", (float(lo), float(hi)))
        object.__setattr__(self, "anomaly_kind", Anomaly(self.anomaly_kind))


def _pulse(rng, sr, freq, duration, decay):
    t = np.arange(int(duration * sr)) / sr
    f = freq * rng.uniform(1 - _PITCH_JITTER, 1 + _PITCH_JITTER)
    envelope = (np.exp(-t / decay) * np.minimum(1.0, t / _ATTACK)
                * np.minimum(1.0, (duration - t) / (0.25 * duration)))
    return np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) * envelope


def _add(x, start, pulse):
    if start >= x.size:
        return
    end = min(x.size, start + pulse.size)
    x[start:end] += pulse[:end - start]


def _bandpass_noise(rng, n, sr, lo, hi):
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spectrum, n)
    return out / (np.std(out) + 1e-12)


def cycle_onsets(rng, duration, bpm, arrhythmia_rng=None) -> np.ndarray:
    """S1 onset times (s); the first falls inside the first cycle."""
    period = 60.0 / bpm
    t = rng.uniform(0.0, period)
    onsets = []
    while t < duration:
        onsets.append(t)
        step = period * rng.uniform(1 - _RATE_JITTER, 1 + _RATE_JITTER)
        if arrhythmia_rng is not None and arrhythmia_rng.random() < 0.5:
            step *= 1.0 + arrhythmia_rng.choice([-1.0, 1.0]) * arrhythmia_rng.uniform(0.25, 0.5)
        t += step
    return np.array(onsets)


def synthesize(seed, config: SynthConfig, pathology: Anomaly | None = None):
    """Samples and S1 onset times (s) of one recording drawn from ``seed``."""
    base = np.random.default_rng(seed)
    extra = np.random.default_rng(base.integers(2 ** 63))
    sr = config.sample_rate
    n = int(round(config.duration_seconds * sr))
    bpm = base.uniform(*config.heart_rate_bpm)
    onsets = cycle_onsets(base, config.duration_seconds, bpm,
                          extra if pathology is Anomaly.ARRHYTHMIA else None)
    gain = base.uniform(0.6, 1.0)
    resp_period = base.uniform(3.0, 5.0)
    resp_phase = base.uniform(0, 2 * np.pi)
    f_s1 = base.uniform(30.0, 80.0)
    f_s2 = base.uniform(60.0, 150.0)

    x = np.zeros(n)
    systoles = []
    for i, t0 in enumerate(onsets):
        period = (onsets[i + 1] - t0) if i + 1 < len(onsets) else 60.0 / bpm
        systole = min(0.3, 0.4 * period)
        s1 = int(t0 * sr)
        s2 = int((t0 + systole) * sr)
        breath = 1 + _RESP_DEPTH * np.sin(2 * np.pi * t0 / resp_period + resp_phase)
        amp = gain * breath * base.uniform(1 - _BEAT_JITTER, 1 + _BEAT_JITTER)
        _add(x, s1, amp * _pulse(base, sr, f_s1, 0.12, 0.02))
        _add(x, s2, 0.7 * amp * _pulse(base, sr, f_s2, 0.09, 0.015))
        systoles.append((s1 + int(0.1 * sr), s2, amp))
        if pathology is Anomaly.EXTRA_SOUND:
            _add(x, s2 + int(0.15 * sr), 0.5 * amp * _pulse(extra, sr, 40.0, 0.1, 0.04))

    noise = base.standard_normal(n) * np.sqrt(np.mean(x ** 2) / 10 ** (config.snr_db / 10.0))
    if pathology is Anomaly.MURMUR:
        hiss = _bandpass_noise(extra, n, sr, *_MURMUR_BAND)
        for lo, hi, amp in systoles:
            strength = amp * extra.uniform() * (extra.random() < _MURMUR_PRESENCE)
            seg = slice(lo, min(hi, n))
            width = x[seg].size
            if width > 1:
                x[seg] += _MURMUR_LEVEL * strength * hiss[seg] * np.hanning(width)
    x = x + noise
    return 0.5 * x / np.max(np.abs(x)), onsets


def generate(config: SynthConfig) -> list[Recording]:
    """Normals first, then abnormals; recording ``i`` of either class uses base stream ``i``."""
    out = []
    for i in range(config.count_normal):
        samples, _ = synthesize((config.seed, i), config)
        out.append(Recording(f"syn_n{i:04d}", "synthetic", samples, config.sample_rate, Label.NORMAL))
    for j in range(config.count_abnormal):
        samples, _ = synthesize((config.seed, config.count_normal + j), config, config.anomaly_kind)
        out.append(Recording(f"syn_a{j:04d}", "synthetic", samples, config.sample_rate, Label.ABNORMAL))
    return out

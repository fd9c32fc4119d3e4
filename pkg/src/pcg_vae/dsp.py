"""Recording -> normalized log-Mel spectrogram -> super-frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Recording

LOG_FLOOR = 1e-10
VARIANCE_FLOOR = 1e-12
FRAMES_PER_SUPER = 5


class DspError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    target_seconds: float = 8.0
    window: int = 1024
    hop: int = 512
    mel_bins: int = 14
    window_fn: str = "hann"


@dataclass(frozen=True)
class MelSpectrogram:
    """``values`` is (mel_bins, n_frames); rows are frequency, columns time."""

    values: np.ndarray
    window: int
    hop: int
    sample_rate: int

    @property
    def mel_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormalizedSpectrogram(MelSpectrogram):
    pass


@dataclass(frozen=True)
class SuperFrame:
    values: np.ndarray
    origin_frame: int


def normalize_length(recording: Recording, target_seconds: float = 8.0) -> Recording:
    """Tile short recordings end-to-end, keep the leading segment of long ones."""
    if target_seconds <= 0:
        raise DspError("target_seconds must be positive")
    target = int(round(target_seconds * recording.sample_rate))
    x = recording.samples
    if x.size == target:
        return recording
    if x.size > target:
        return recording.with_samples(x[:target])
    reps = -(-target // x.size)
    return recording.with_samples(np.tile(x, reps)[:target])


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(mel_bins: int, sample_rate: int) -> np.ndarray:
    """Centres (Hz) of ``mel_bins`` triangles spaced evenly in HTK mel from 0 to Nyquist."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), mel_bins + 2))
    return edges[1:-1]


def mel_filterbank(mel_bins: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with unit peak, shape (mel_bins, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), mel_bins + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def analysis_window(name: str, size: int) -> np.ndarray:
    if name == "hann":
        # periodic Hann, the usual STFT convention
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)
    if name in ("rect", "boxcar"):
        return np.ones(size)
    raise DspError(f"unknown analysis window {name!r}")


def frame_count(n_samples: int, window: int, hop: int) -> int:
    return (n_samples - window) // hop + 1


def mel_spectrogram(recording: Recording, window: int = 1024, hop: int = 512,
                    mel_bins: int = 14, window_fn: str = "hann") -> MelSpectrogram:
    x = recording.samples
    if x.size < window:
        raise DspError(f"{recording.id}: {x.size} samples is shorter than one {window}-sample window")
    n = frame_count(x.size, window, hop)
    idx = np.arange(window)[None, :] + hop * np.arange(n)[:, None]
    frames = x[idx] * analysis_window(window_fn, window)
    power = np.abs(np.fft.rfft(frames, n=window, axis=1)) ** 2
    energies = mel_filterbank(mel_bins, window, recording.sample_rate) @ power.T
    return MelSpectrogram(np.log(energies + LOG_FLOOR), window, hop, recording.sample_rate)


def normalize_bins(spec: MelSpectrogram) -> NormalizedSpectrogram:
    """Z-score each Mel band across time; near-constant bands become zeros."""
    if spec.n_frames < 2:
        raise DspError("need at least 2 frames to normalize")
    s = spec.values
    mean = s.mean(axis=1, keepdims=True)
    var = s.var(axis=1, keepdims=True)
    flat = var <= VARIANCE_FLOOR
    out = np.where(flat, 0.0, (s - mean) / np.sqrt(np.where(flat, 1.0, var)))
    return NormalizedSpectrogram(out, spec.window, spec.hop, spec.sample_rate)


def super_frames(spec: NormalizedSpectrogram, width: int = FRAMES_PER_SUPER) -> list[SuperFrame]:
    """Slide a ``width``-frame window by one frame, flattening column by column."""
    n = spec.n_frames
    if n < width:
        raise DspError(f"need at least {width} frames for a super-frame, got {n}")
    cols = spec.values.T
    return [SuperFrame(cols[i:i + width].reshape(-1), i) for i in range(n - width + 1)]


def stack_frames(frames: list[SuperFrame]) -> np.ndarray:
    if not frames:
        return np.empty((0, 0))
    return np.stack([f.values for f in frames])


def unflatten(frame: SuperFrame, mel_bins: int) -> np.ndarray:
    """Inverse of the super-frame flattening: (mel_bins, width) block."""
    return frame.values.reshape(-1, mel_bins).T


def recording_frames(recording: Recording, config: PipelineConfig = PipelineConfig()) -> list[SuperFrame]:
    rec = normalize_length(recording, config.target_seconds)
    spec = mel_spectrogram(rec, config.window, config.hop, config.mel_bins, config.window_fn)
    return super_frames(normalize_bins(spec))


def corpus_matrix(recordings, config: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """All super-frames of all recordings stacked into one (n, 5 * mel_bins) array."""
    return np.concatenate([stack_frames(recording_frames(r, config)) for r in recordings])


def dump_matrix(path, matrix: np.ndarray) -> None:
    """Headerless row-major CSV, full float precision."""
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))

"""Recording ingestion and the normal-only train/eval split.

On-disk layout follows the PhysioNet/CinC 2016 challenge: a directory of
16-bit mono WAV files plus a headerless ``REFERENCE.csv`` with one
``basename,label`` row per recording (-1 normal, 1 abnormal).
"""

from __future__ import annotations

import csv
import enum
import math
import os
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SUBSETS = ("a", "b", "c", "d", "e", "f", "synthetic")
REFERENCE_FILE = "REFERENCE.csv"
EXPECTED_RATE = 2000


class DatasetError(ValueError):
    pass


class Label(enum.Enum):
    NORMAL = -1
    ABNORMAL = 1

    @classmethod
    def from_code(cls, code: str | int) -> "Label":
        try:
            return cls(int(code))
        except ValueError:
            raise DatasetError(f"label must be -1 or 1, got {code!r}") from None

    def __str__(self) -> str:
        return "Normal" if self is Label.NORMAL else "Abnormal"


@dataclass(frozen=True)
class Recording:
    id: str
    subset: str
    samples: np.ndarray = field(repr=False)
    sample_rate: int
    label: Label

    def __post_init__(self):
        if self.subset not in SUBSETS:
            raise DatasetError(f"unknown subset tag {self.subset!r}")
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise DatasetError(f"{self.id}: samples must be a non-empty 1-D sequence")
        if self.sample_rate <= 0:
            raise DatasetError(f"{self.id}: sample rate must be positive")
        if not isinstance(self.label, Label):
            raise DatasetError(f"{self.id}: label is required")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "Recording":
        return Recording(self.id, self.subset, samples, self.sample_rate, self.label)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[Recording]
    eval: list[Recording]
    seed: int


def read_wav(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM mono WAV, scaled to [-1, 1) by 1/32768."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise DatasetError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise DatasetError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DatasetError(f"{path}: unparseable WAV ({exc})") from exc
    pcm = np.frombuffer(raw, dtype="<i2")
    return pcm.astype(np.float64) / 32768.0, rate


def write_wav(path: str | os.PathLike, samples: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def read_reference(path: str | os.PathLike) -> list[tuple[str, Label]]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise DatasetError(f"{path}:{lineno}: expected 'name,label'")
            rows.append((row[0].strip(), Label.from_code(row[1].strip())))
    return rows


def write_reference(path: str | os.PathLike, recordings: Iterable[Recording]) -> None:
    with open(path, "w", newline="") as fh:
        for rec in recordings:
            fh.write(f"{rec.id},{rec.label.value}\n")


def load_directory(path: str | os.PathLike, subset: str,
                   sample_rate: int | None = EXPECTED_RATE) -> list[Recording]:
    """Load every recording listed in ``path/REFERENCE.csv``.

    Recordings whose header rate differs from ``sample_rate`` are rejected;
    pass ``sample_rate=None`` to accept any rate.
    """
    root = Path(path)
    ref = root / REFERENCE_FILE
    if not ref.is_file():
        raise DatasetError(f"missing reference file {ref}")
    recordings = []
    for name, label in read_reference(ref):
        wav_path = root / f"{name}.wav"
        if not wav_path.is_file():
            raise DatasetError(f"{wav_path} listed in {REFERENCE_FILE} but not on disk")
        samples, rate = read_wav(wav_path)
        if sample_rate is not None and rate != sample_rate:
            raise DatasetError(f"{wav_path}: sample rate {rate} Hz, expected {sample_rate} Hz")
        recordings.append(Recording(name, subset, samples, rate, label))
    return recordings


def save_directory(path: str | os.PathLike, recordings: Sequence[Recording]) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for rec in recordings:
        write_wav(root / f"{rec.id}.wav", rec.samples, rec.sample_rate)
    write_reference(root / REFERENCE_FILE, recordings)


def split_normals(recordings: Sequence[Recording], train_fraction: float = 0.9,
                  seed: int = 0) -> DatasetSplit:
    """Put ``floor(train_fraction * n_normal)`` shuffled normals in train.

    Everything else (remaining normals, every abnormal) goes to eval, in
    source order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must be in (0, 1), got {train_fraction}")
    normal_idx = [i for i, r in enumerate(recordings) if r.label is Label.NORMAL]
    if not normal_idx:
        raise DatasetError("no Normal recordings to train on")
    order = np.random.default_rng(seed).permutation(len(normal_idx))
    n_train = math.floor(train_fraction * len(normal_idx))
    train_idx = [normal_idx[k] for k in order[:n_train]]
    chosen = set(train_idx)
    eval_ = [r for i, r in enumerate(recordings) if i not in chosen]
    return DatasetSplit([recordings[i] for i in train_idx], eval_, seed)

"""Per-recording anomaly scores from a trained model."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .dataset import Label, Recording
from .vae import VaeModel, infer


@dataclass(frozen=True)
class FrameScore:
    recon_loss: float
    kl: float
    origin_frame: int


@dataclass(frozen=True)
class ScoreReport:
    recording_id: str
    score: float
    label: Label
    frame_scores: list[FrameScore] = field(default_factory=list, repr=False)


def score_recording(model: VaeModel, recording: Recording,
                    config: dsp.PipelineConfig = dsp.PipelineConfig()) -> ScoreReport:
    """Mean reconstruction MSE over the recording's super-frames.

    Inference is deterministic: running batch-norm statistics and the
    posterior mean as the latent code.
    """
    frames = dsp.recording_frames(recording, config)
    recon, kl, _ = infer(model, dsp.stack_frames(frames))
    scores = [FrameScore(float(r), float(k), f.origin_frame) for r, k, f in zip(recon, kl, frames)]
    return ScoreReport(recording.id, float(np.mean(recon)), recording.label, scores)


def score_recordings(model, recordings, config: dsp.PipelineConfig = dsp.PipelineConfig()) -> list[ScoreReport]:
    return [score_recording(model, r, config) for r in recordings]


def write_scores(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "label", "score"])
        for r in reports:
            w.writerow([r.recording_id, r.label.value, repr(r.score)])


def write_frame_scores(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "frame_index", "recon_loss", "kl"])
        for r in reports:
            for f in r.frame_scores:
                w.writerow([r.recording_id, f.origin_frame, repr(f.recon_loss), repr(f.kl)])


def read_scores(path) -> list[ScoreReport]:
    """Read a score CSV back; per-frame detail is not restored."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [ScoreReport(rid, float(score), Label.from_code(label)) for rid, label, score in rows[1:]]

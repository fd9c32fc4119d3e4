"""Experiment configuration and the train -> score -> ROC harness.

Configs are INI files::

    [data]
    root = /data/physionet2016      ; holds training-a ... training-f
    subsets = abdef                 ; default skips subset c
    ; or explicit directories, each tagged with its subset:
    ; dirs = /data/training-e:e, /data/training-a:a

    [synth]                         ; used when [data] is absent
    seed = 0
    count_normal = 220
    count_abnormal = 20
    anomaly_kind = murmur

    [experiment]
    train_fraction = 0.9
    beta = 0.01                     ; train / eval
    betas = ae, 0, 0.01, 0.1, 1, 10, 100   ; sweep
    seeds = 0, 1, 2
    out = runs/demo

    [train]
    batch_size = 640
    epochs = 50
    learning_rate = 0.001

A beta of ``ae`` selects the plain auto-encoder.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp, metrics, scoring, synth, vae
from .dataset import Recording, load_directory, split_normals

DEFAULT_BETAS = ("ae", 0.0, 0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_SUBSETS = "abdef"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BetaSetting:
    mode: vae.Mode
    beta: float

    @classmethod
    def parse(cls, value) -> "BetaSetting":
        text = str(value).strip().lower()
        if text == "ae":
            return cls(vae.Mode.PLAIN_AE, 0.0)
        try:
            beta = float(text)
        except ValueError:
            raise ConfigError(f"beta must be a number or 'ae', got {value!r}") from None
        if not (math.isfinite(beta) and beta >= 0):
            raise ConfigError(f"beta must be finite and >= 0, got {value!r}")
        return cls(vae.Mode.BETA_VAE, beta)

    def __str__(self) -> str:
        return "ae" if self.mode is vae.Mode.PLAIN_AE else repr(self.beta)


@dataclass
class ExperimentConfig:
    data_dirs: list[tuple[str, str]] = field(default_factory=list)
    synth: synth.SynthConfig | None = None
    train_fraction: float = 0.9
    beta: BetaSetting = BetaSetting(vae.Mode.BETA_VAE, 0.01)
    betas: list[BetaSetting] = field(default_factory=lambda: [BetaSetting.parse(b) for b in DEFAULT_BETAS])
    seeds: list[int] = field(default_factory=lambda: [0])
    train: vae.TrainConfig = field(default_factory=vae.TrainConfig)
    pipeline: dsp.PipelineConfig = field(default_factory=dsp.PipelineConfig)
    out: str = "runs/default"

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if not self.betas:
            raise ConfigError("beta list must not be empty")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if not self.data_dirs and self.synth is None:
            self.synth = synth.SynthConfig()

    def train_config(self, seed: int) -> vae.TrainConfig:
        return replace(self.train, seed=seed)


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def load_config(path=None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        cp.read(path)
    kwargs = {}
    try:
        if cp.has_section("data"):
            d = cp["data"]
            dirs = []
            if "root" in d:
                for s in d.get("subsets", DEFAULT_SUBSETS).replace(",", ""):
                    dirs.append((str(Path(d["root"]) / f"training-{s}"), s))
            for item in _split_list(d.get("dirs", "")):
                p, _, tag = item.rpartition(":")
                if not p:
                    raise ConfigError(f"data dir {item!r} needs a ':subset' suffix")
                dirs.append((p, tag))
            kwargs["data_dirs"] = dirs
        if cp.has_section("synth"):
            s = cp["synth"]
            sk = {}
            for key in ("seed", "count_normal", "count_abnormal", "sample_rate"):
                if key in s:
                    sk[key] = s.getint(key)
            for key in ("duration_seconds", "snr_db"):
                if key in s:
                    sk[key] = s.getfloat(key)
            if "heart_rate_bpm" in s:
                sk["heart_rate_bpm"] = tuple(float(v) for v in _split_list(s["heart_rate_bpm"]))
            if "anomaly_kind" in s:
                sk["anomaly_kind"] = synth.Anomaly(s["anomaly_kind"])
            kwargs["synth"] = synth.SynthConfig(**sk)
        if cp.has_section("experiment"):
            e = cp["experiment"]
            if "train_fraction" in e:
                kwargs["train_fraction"] = e.getfloat("train_fraction")
            if "beta" in e:
                kwargs["beta"] = BetaSetting.parse(e["beta"])
            if "betas" in e:
                kwargs["betas"] = [BetaSetting.parse(b) for b in _split_list(e["betas"])]
            if "seeds" in e:
                kwargs["seeds"] = [int(v) for v in _split_list(e["seeds"])]
            if "out" in e:
                kwargs["out"] = e["out"]
        if cp.has_section("train"):
            t = cp["train"]
            tk = {}
            for key in ("batch_size", "epochs"):
                if key in t:
                    tk[key] = t.getint(key)
            if "learning_rate" in t:
                tk["learning_rate"] = t.getfloat("learning_rate")
            kwargs["train"] = vae.TrainConfig(**tk)
        if cp.has_section("pipeline"):
            p = cp["pipeline"]
            pk = {}
            for key in ("window", "hop", "mel_bins"):
                if key in p:
                    pk[key] = p.getint(key)
            if "target_seconds" in p:
                pk["target_seconds"] = p.getfloat("target_seconds")
            if "window_fn" in p:
                pk["window_fn"] = p["window_fn"]
            kwargs["pipeline"] = dsp.PipelineConfig(**pk)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    return ExperimentConfig(**kwargs)


def load_recordings(config: ExperimentConfig) -> list[Recording]:
    if config.data_dirs:
        recordings = []
        for path, tag in config.data_dirs:
            recordings.extend(load_directory(path, tag))
        return recordings
    return synth.generate(config.synth)


@dataclass
class RunResult:
    setting: BetaSetting
    seed: int
    auc: float
    correlation: float
    model: vae.VaeModel
    history: list[vae.LossBreakdown]
    reports: list[scoring.ScoreReport]
    roc: metrics.RocCurve


def train_on(recordings, setting: BetaSetting, train_config: vae.TrainConfig,
             pipeline: dsp.PipelineConfig = dsp.PipelineConfig(), init_seed: int | None = None):
    frames = dsp.corpus_matrix(recordings, pipeline)
    model = vae.init_model(setting.beta, train_config.seed if init_seed is None else init_seed, setting.mode,
                           input_dim=frames.shape[1])
    return vae.train(model, frames, train_config)


def correlation_or_nan(reports) -> float:
    """KL/reconstruction correlation; NaN where KL is constant (plain AE)."""
    try:
        return metrics.kl_recon_correlation(reports)
    except metrics.MetricError:
        return float("nan")


def run_once(recordings, setting: BetaSetting, seed: int, config: ExperimentConfig) -> RunResult:
    split = split_normals(recordings, config.train_fraction, seed)
    model, history = train_on(split.train, setting, config.train_config(seed), config.pipeline)
    reports = scoring.score_recordings(model, split.eval, config.pipeline)
    roc = metrics.roc_auc(reports)
    return RunResult(setting, seed, roc.auc, correlation_or_nan(reports), model, history, reports, roc)


def sweep(recordings, config: ExperimentConfig, progress=None) -> list[RunResult]:
    results = []
    for setting in config.betas:
        for seed in config.seeds:
            result = run_once(recordings, setting, seed, config)
            results.append(result)
            if progress is not None:
                progress(result)
    return results


def summarize(results: list[RunResult]) -> list[dict]:
    """One row per beta setting: mean and population std over seeds."""
    rows = []
    order = []
    for r in results:
        if r.setting not in order:
            order.append(r.setting)
    for setting in order:
        runs = [r for r in results if r.setting == setting]
        auc = np.array([r.auc for r in runs])
        corr = np.array([r.correlation for r in runs])
        rows.append({
            "beta": str(setting),
            "n_seeds": len(runs),
            "auc_mean": float(auc.mean()),
            "auc_std": float(auc.std()),
            "corr_mean": float(corr.mean()),
            "corr_std": float(corr.std()),
        })
    return rows


# -- artifact writers ------------------------------------------------------------

def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mse", "kl", "beta", "total"])
        for i, lb in enumerate(history):
            w.writerow([i, repr(lb.mse), repr(lb.kl), repr(lb.beta), repr(lb.total)])


def write_roc(path, roc: metrics.RocCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for f, t in roc.points:
            w.writerow([repr(f), repr(t)])


def write_split(path, split) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording_id", "subset", "label", "role"])
        for role, recs in (("train", split.train), ("eval", split.eval)):
            for r in recs:
                w.writerow([r.id, r.subset, r.label.value, role])


def write_sweep(path, rows) -> None:
    cols = ["beta", "n_seeds", "auc_mean", "auc_std", "corr_mean", "corr_std"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], (str, int)) else repr(row[c]) for c in cols])


def write_sweep_runs(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "seed", "auc", "correlation", "final_mse", "final_kl", "final_total"])
        for r in results:
            last = r.history[-1] if r.history else None
            w.writerow([str(r.setting), r.seed, repr(r.auc), repr(r.correlation),
                        repr(last.mse) if last else "", repr(last.kl) if last else "",
                        repr(last.total) if last else ""])


"""``pcg-vae`` command line: synth, train, score, eval, sweep, correlate."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset, dsp, experiment, metrics, scoring, synth, vae
from .experiment import BetaSetting, ConfigError


def _config(args) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
        if cfg.synth is not None and args.command == "synth":
            cfg.synth = replace(cfg.synth, seed=args.seed)
    if getattr(args, "beta", None) is not None:
        cfg.beta = BetaSetting.parse(args.beta)
        cfg.betas = [cfg.beta]
    if getattr(args, "data", None):
        if not args.subset:
            raise ConfigError("--data needs a --subset tag (a-f or synthetic)")
        cfg.data_dirs = [(args.data, args.subset)]
    elif getattr(args, "subset", None):
        if not cfg.data_dirs:
            raise ConfigError("--subset filters [data] directories, but the config has none")
        wanted = set(args.subset.replace(",", ""))
        cfg.data_dirs = [(p, s) for p, s in cfg.data_dirs if s in wanted]
        if not cfg.data_dirs:
            raise ConfigError(f"no configured data directory matches subsets {args.subset!r}")
    if getattr(args, "out", None):
        cfg.out = args.out
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(lb: vae.LossBreakdown) -> str:
    return f"mse={lb.mse:.6f} kl={lb.kl:.6f} beta={lb.beta:g} total={lb.total:.6f}"


def cmd_synth(args) -> None:
    cfg = _config(args)
    scfg = cfg.synth or synth.SynthConfig()
    recordings = synth.generate(scfg)
    out = _out_dir(cfg)
    dataset.save_directory(out, recordings)
    print(f"wrote {len(recordings)} recordings to {out}")


def cmd_train(args) -> None:
    cfg = _config(args)
    seed = cfg.seeds[0]
    recordings = experiment.load_recordings(cfg)
    split = dataset.split_normals(recordings, cfg.train_fraction, seed)
    train_cfg = cfg.train_config(seed)
    model, history = experiment.train_on(split.train, cfg.beta, train_cfg, cfg.pipeline)
    out = _out_dir(cfg)
    vae.save_checkpoint(out / "checkpoint.json", model, train_cfg)
    experiment.write_history(out / "loss_history.csv", history)
    experiment.write_split(out / "split.csv", split)
    print(f"trained on {len(split.train)} recordings; final epoch: {_fmt(history[-1]) if history else 'no epochs'}")


def _eval_set(args, cfg, model_seed):
    """Explicit --data directory, else the eval half of the configured split."""
    recordings = experiment.load_recordings(cfg)
    if getattr(args, "data", None):
        return recordings
    return dataset.split_normals(recordings, cfg.train_fraction, model_seed).eval


def _load(args, cfg):
    model, train_cfg = vae.load_checkpoint(args.checkpoint)
    seed = cfg.seeds[0] if args.seed is not None or train_cfg is None else train_cfg.seed
    return model, seed


def cmd_score(args) -> list[scoring.ScoreReport]:
    cfg = _config(args)
    model, seed = _load(args, cfg)
    reports = scoring.score_recordings(model, _eval_set(args, cfg, seed), cfg.pipeline)
    out = _out_dir(cfg)
    scoring.write_scores(out / "scores.csv", reports)
    scoring.write_frame_scores(out / "frame_scores.csv", reports)
    print(f"scored {len(reports)} recordings")
    return reports


def cmd_eval(args) -> None:
    cfg = _config(args)
    model, seed = _load(args, cfg)
    reports = scoring.score_recordings(model, _eval_set(args, cfg, seed), cfg.pipeline)
    roc = metrics.roc_auc(reports)
    corr = experiment.correlation_or_nan(reports)
    out = _out_dir(cfg)
    scoring.write_scores(out / "scores.csv", reports)
    scoring.write_frame_scores(out / "frame_scores.csv", reports)
    experiment.write_roc(out / "roc.csv", roc)
    n_abn = sum(r.label is dataset.Label.ABNORMAL for r in reports)
    report = {
        "checkpoint": str(args.checkpoint),
        "mode": model.mode.value,
        "beta": model.beta,
        "n_recordings": len(reports),
        "n_abnormal": n_abn,
        "auc": roc.auc,
        "kl_recon_correlation": None if math.isnan(corr) else corr,
    }
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    print(f"AUC {roc.auc:.4f} over {len(reports)} recordings ({n_abn} abnormal)")


def cmd_sweep(args) -> None:
    cfg = _config(args)
    recordings = experiment.load_recordings(cfg)

    def progress(r):
        print(f"beta={r.setting} seed={r.seed} auc={r.auc:.4f} corr={r.correlation:.4f}", flush=True)

    results = experiment.sweep(recordings, cfg, progress)
    rows = experiment.summarize(results)
    out = _out_dir(cfg)
    experiment.write_sweep(out / "sweep.csv", rows)
    experiment.write_sweep_runs(out / "sweep_runs.csv", results)
    print(f"{'beta':>6} {'auc':>15} {'corr':>15}")
    for row in rows:
        print(f"{row['beta']:>6} {row['auc_mean']:.4f} ± {row['auc_std']:.4f} "
              f"{row['corr_mean']:.4f} ± {row['corr_std']:.4f}")


def cmd_correlate(args) -> None:
    cfg = _config(args)
    model, seed = _load(args, cfg)
    reports = scoring.score_recordings(model, _eval_set(args, cfg, seed), cfg.pipeline)
    rho = metrics.kl_recon_correlation(reports)
    out = _out_dir(cfg)
    scoring.write_frame_scores(out / "frame_scores.csv", reports)
    (out / "correlation.txt").write_text(f"{rho!r}\n")
    print(f"pearson(kl, recon) = {rho:.4f} over {sum(len(r.frame_scores) for r in reports)} super-frames")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcg-vae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help, checkpoint=False, data=True):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="INI experiment config")
        p.add_argument("--seed", type=int, help="override the experiment seed")
        p.add_argument("--beta", help="KL weight, or 'ae' for the plain auto-encoder")
        p.add_argument("--subset", help="subset tag for --data, or filter for configured dirs")
        p.add_argument("--out", help="output directory")
        if data:
            p.add_argument("--data", help="PhysioNet-style directory (WAVs + REFERENCE.csv)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        p.set_defaults(func=func)

    add("synth", cmd_synth, "write a synthetic corpus as WAV + REFERENCE.csv", data=False)
    add("train", cmd_train, "train on the normal 90%% of the data")
    add("score", cmd_score, "anomaly score per recording", checkpoint=True)
    add("eval", cmd_eval, "scores, ROC curve and AUC", checkpoint=True)
    add("sweep", cmd_sweep, "train and evaluate every beta in the config")
    add("correlate", cmd_correlate, "Pearson correlation of per-frame KL and reconstruction loss",
        checkpoint=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, dataset.DatasetError, dsp.DspError, vae.ModelError, metrics.MetricError,
            FloatingPointError, OSError, ValueError) as exc:
        print(f"pcg-vae {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

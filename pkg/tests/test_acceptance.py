"""End-to-end acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_recording
from oracles import brute_auc, gradient_errors, min_bn_variance, two_pass_pearson
from pcg_vae import dataset, dsp, experiment, metrics, scoring, synth, vae

PROTOCOL_SEED = 0


def report(tag, ok, detail):
    status = ok if isinstance(ok, str) else "PASS" if ok else "FAIL"
    line = f"{tag}: {status} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def protocol_split(seed):
    """200 normal train, 20 normal + 20 murmur eval."""
    recs = synth.generate(synth.SynthConfig(seed=seed, count_normal=220, count_abnormal=20,
                                            anomaly_kind=synth.Anomaly.MURMUR))
    return dataset.split_normals(recs, 10 / 11, seed)


def protocol_run(seed, beta):
    split = protocol_split(seed)
    cfg = vae.TrainConfig(seed=seed)
    model, history = vae.train(vae.init_model(beta, seed), dsp.corpus_matrix(split.train), cfg)
    reports = scoring.score_recordings(model, split.eval)
    return model, cfg, reports, history


@pytest.fixture(scope="module")
def protocol():
    t0 = time.perf_counter()
    runs = {beta: protocol_run(PROTOCOL_SEED, beta) for beta in (0.01, 1.0)}
    return runs, time.perf_counter() - t0


def random_tiny_case(mode, beta, seed):
    rng = np.random.default_rng(seed)
    model = vae.init_model(beta, seed, mode, input_dim=6, hidden=(4,), latent_dim=2)
    for p in model.params.values():
        p += 0.3 * rng.standard_normal(p.shape)
    return model, rng.standard_normal((8, 6)), rng.standard_normal((8, 2))


def test_c1_gradient_correctness():
    # A batch-norm unit whose batch variance approaches eps is so curved that
    # the O(h^2) central-difference error at h = 1e-4 exceeds the tolerance on
    # its own, so such draws are redrawn and counted (all draws are checked at
    # a smaller step in the unit tests).
    t0 = time.perf_counter()
    worst = 0.0
    n_models = checked = skipped = redrawn = 0
    for m, mode in enumerate(vae.Mode):
        for b, beta in enumerate((0.0, 0.01, 1.0, 100.0)):
            accepted, draw = 0, 0
            while accepted < 20:
                case = random_tiny_case(mode, beta, 10_000 * m + 1_000 * b + draw)
                draw += 1
                if min_bn_variance(*case) < 1e-2:
                    redrawn += 1
                    continue
                err, c, s = gradient_errors(*case)
                worst, checked, skipped = max(worst, err), checked + c, skipped + s
                accepted += 1
                n_models += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10.0
    report("C1 gradient correctness", ok,
           f"{n_models} models, max rel err {worst:.2e} < 1e-4 over {checked} coords "
           f"({skipped} straddling a ReLU kink skipped, {redrawn} near-singular batch-norm draws redrawn), "
           f"{elapsed:.1f}s < 10s")
    assert skipped < 0.01 * checked
    assert worst < 1e-4
    assert elapsed < 10.0


def test_c2_loss_identities():
    model = vae.init_model(0.5, 3, input_dim=6, hidden=(4,), latent_dim=2)
    for head in ("mu", "logvar"):
        model.params[f"{head}.weight"][:] = 0.0
        model.params[f"{head}.bias"][:] = 0.0
    zero_kl = vae.loss(model, np.random.default_rng(0).standard_normal((5, 6))).kl

    rng = np.random.default_rng(2)
    worst = 0.0
    bitwise = True
    for i in range(1000):
        beta = float(rng.choice([0.0, 0.01, 1.0, 100.0, rng.uniform(0, 10)]))
        model = vae.init_model(beta, i, input_dim=6, hidden=(4,), latent_dim=2)
        n = int(rng.integers(2, 12))
        x = rng.standard_normal((n, 6)) * rng.uniform(0.1, 3)
        noise = rng.standard_normal((n, 2))
        lb = vae.loss(model, x, noise)
        latent = vae.encode(model, x, training=True)
        recon = vae.decode(model, vae.reparameterize(latent, noise), training=True)
        mse = np.mean((x - recon) ** 2)
        kl = np.mean(-0.5 * np.sum(1 + latent.logvar - latent.mu ** 2 - np.exp(latent.logvar), axis=1))
        expected = mse + beta * kl
        worst = max(worst, abs(lb.total - expected) / max(1.0, abs(expected)))
        if beta == 0.0:
            bitwise &= lb.total == lb.mse
    ok = zero_kl == 0.0 and worst <= 1e-9 and bitwise
    report("C2 loss identities", ok,
           f"kl at mu=0,logvar=0 is {zero_kl!r}; max |total - (mse + beta kl)| {worst:.1e} <= 1e-9; "
           f"beta=0 bitwise {bitwise}")
    assert zero_kl == 0.0
    assert worst <= 1e-9
    assert bitwise


def test_c3_auc_oracle():
    rng = np.random.default_rng(3)
    worst_curve = worst_trap = 0.0
    exact_negation = True
    for _ in range(200):
        n = int(rng.integers(2, 101))
        labels = rng.random(n) < rng.uniform(0.1, 0.9)
        labels[0], labels[1] = True, False
        scores = np.round(rng.standard_normal(n) * rng.choice([1, 3, 10])) / 2
        roc = metrics.roc_curve(scores, labels)
        truth = brute_auc(scores.tolist(), labels.tolist())
        worst_curve = max(worst_curve, abs(roc.auc - truth))
        worst_trap = max(worst_trap, abs(metrics.trapezoid_area(roc.fpr, roc.tpr) - truth))
        exact_negation &= metrics.roc_curve(-scores, labels).auc == 1.0 - roc.auc
    ok = worst_curve <= 1e-12 and worst_trap <= 1e-12 and exact_negation
    report("C3 AUC oracle", ok,
           f"200 tied sets, max |auc - pair count| {max(worst_curve, worst_trap):.1e} <= 1e-12; "
           f"negation exact {exact_negation}")
    assert worst_curve <= 1e-12
    assert worst_trap <= 1e-12
    assert exact_negation


def test_c4_pearson_oracle():
    rng = np.random.default_rng(4)
    worst = worst_affine = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 300))
        x = rng.standard_normal(n) * rng.uniform(0.01, 100) + rng.uniform(-50, 50)
        y = rng.uniform(-1, 1) * x + rng.standard_normal(n) * rng.uniform(0.01, 10)
        rho = metrics.pearson(x, y)
        worst = max(worst, abs(rho - two_pass_pearson(x.tolist(), y.tolist())))
        a, c = rng.uniform(0.1, 10, 2) * rng.choice([-1, 1], 2)
        b, d = rng.uniform(-100, 100, 2)
        shifted = metrics.pearson(a * x + b, c * y + d)
        worst_affine = max(worst_affine, abs(shifted - np.sign(a * c) * rho))
    ok = worst <= 1e-12 and worst_affine <= 1e-9
    report("C4 Pearson oracle", ok,
           f"200 vectors, max |rho - two-pass| {worst:.1e} <= 1e-12; affine {worst_affine:.1e} <= 1e-9")
    assert worst <= 1e-12
    assert worst_affine <= 1e-9


def test_c5_pipeline_shape_law():
    rng = np.random.default_rng(5)
    fixed_ok = True
    for _ in range(5):
        rec = make_recording(rng.standard_normal(16000))
        spec = dsp.mel_spectrogram(rec)
        frames = dsp.recording_frames(rec)
        fixed_ok &= spec.values.shape == (14, 30) and len(frames) == 26
        fixed_ok &= all(f.values.shape == (70,) for f in frames)
    law_ok = True
    for _ in range(100):
        n = int(rng.integers(1024 + 4 * 512, 40000))
        spec = dsp.mel_spectrogram(make_recording(rng.standard_normal(n)))
        expected = math.floor((n - 1024) / 512) + 1
        law_ok &= spec.n_frames == expected
        law_ok &= len(dsp.super_frames(dsp.normalize_bins(spec))) == expected - 4
    ok = fixed_ok and law_ok
    report("C5 pipeline shape law", ok, f"8 s -> 14x30 -> 26x70 {fixed_ok}; 100 random lengths {law_ok}")
    assert fixed_ok
    assert law_ok


def test_c6_end_to_end_detection(protocol):
    runs, elapsed = protocol
    reports = runs[0.01][2]
    auc = metrics.roc_auc(reports).auc
    n_norm = sum(r.label is dataset.Label.NORMAL for r in reports)
    ok = auc >= 0.85 and elapsed / 2 < 300
    report("C6 end-to-end detection", ok,
           f"beta=0.01 seed {PROTOCOL_SEED}: AUC {auc:.4f} >= 0.85 on {n_norm}N/{len(reports) - n_norm}A, "
           f"{elapsed / 2:.1f}s per run < 300s")
    assert len(reports) == 40 and n_norm == 20
    assert auc >= 0.85
    assert elapsed / 2 < 300


def test_c7_correlation_trend(protocol):
    runs, _ = protocol
    rho_small = metrics.kl_recon_correlation(runs[0.01][2])
    rho_big = metrics.kl_recon_correlation(runs[1.0][2])
    ok = rho_big > rho_small
    report("C7 correlation trend", ok, f"rho(beta=1) {rho_big:.4f} > rho(beta=0.01) {rho_small:.4f}")
    assert ok


def _physionet_e():
    path = os.environ.get("PCG_PHYSIONET_E")
    return Path(path) if path else None


@pytest.mark.slow
@pytest.mark.skipif(_physionet_e() is None, reason="set PCG_PHYSIONET_E to the training-e directory")
def test_c8_real_data_subset_e():
    t0 = time.perf_counter()
    recordings = dataset.load_directory(_physionet_e(), "e")
    cfg = experiment.ExperimentConfig(
        data_dirs=[(str(_physionet_e()), "e")],
        betas=[experiment.BetaSetting.parse("0.01"), experiment.BetaSetting.parse("ae")],
        seeds=[0, 1, 2])
    rows = {row["beta"]: row for row in experiment.summarize(experiment.sweep(recordings, cfg))}
    elapsed = time.perf_counter() - t0
    beta_auc, ae_auc = rows["0.01"]["auc_mean"], rows["ae"]["auc_mean"]
    ok = abs(beta_auc - 0.923) <= 0.05 and abs(ae_auc - 0.922) <= 0.05 and elapsed < 1800
    report("C8 real data subset e", ok,
           f"beta=0.01 AUC {beta_auc:.4f} vs 0.923 +- 0.05; AE {ae_auc:.4f} vs 0.922 +- 0.05; {elapsed:.0f}s")
    assert abs(beta_auc - 0.923) <= 0.05
    assert abs(ae_auc - 0.922) <= 0.05
    assert elapsed < 1800


def test_c8_reported_when_skipped():
    if _physionet_e() is None:
        report("C8 real data subset e", "SKIP", "PCG_PHYSIONET_E not set")


def test_c9_determinism(protocol):
    runs, _ = protocol
    model, cfg, reports, _ = runs[0.01]
    model2, cfg2, reports2, _ = protocol_run(PROTOCOL_SEED, 0.01)
    same_ckpt = vae.dumps_checkpoint(model, cfg) == vae.dumps_checkpoint(model2, cfg2)
    auc1 = metrics.roc_auc(reports).auc
    auc2 = metrics.roc_auc(reports2).auc
    ok = same_ckpt and auc1 == auc2
    report("C9 determinism", ok, f"checkpoint bytes identical {same_ckpt}; AUC {auc1!r} == {auc2!r}")
    assert same_ckpt
    assert auc1 == auc2


@pytest.mark.slow
def test_detection_and_trend_hold_on_other_seeds():
    # not a criterion of its own: guards against the protocol seed being a lucky draw
    aucs = []
    for seed in (1, 2, 3, 4):
        small = protocol_run(seed, 0.01)[2]
        big = protocol_run(seed, 1.0)[2]
        aucs.append(metrics.roc_auc(small).auc)
        assert metrics.kl_recon_correlation(big) > metrics.kl_recon_correlation(small)
    assert min(aucs) >= 0.85

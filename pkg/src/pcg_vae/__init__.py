"""Unsupervised heart-sound anomaly detection with a beta-VAE.

Pipeline: 8 s recording -> log-Mel spectrogram (1024/512, 14 bands) ->
per-band z-score -> 5-frame super-frames -> beta-VAE trained on normal
recordings only -> mean per-super-frame reconstruction MSE as the anomaly
score.
"""

from .dataset import DatasetSplit, Label, Recording, load_directory, split_normals
from .dsp import (
    MelSpectrogram,
    NormalizedSpectrogram,
    PipelineConfig,
    SuperFrame,
    mel_spectrogram,
    normalize_bins,
    normalize_length,
    super_frames,
)
from .metrics import RocCurve, kl_recon_correlation, pearson, roc_auc
from .scoring import FrameScore, ScoreReport, score_recording
from .synth import Anomaly, SynthConfig, generate
from .vae import (
    LossBreakdown,
    Mode,
    TrainConfig,
    VaeModel,
    decode,
    encode,
    init_model,
    loss,
    loss_gradients,
    reparameterize,
    train,
)

__version__ = "0.1.0"

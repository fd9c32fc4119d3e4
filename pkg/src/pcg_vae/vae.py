"""Fully-connected beta-VAE (and plain auto-encoder) in numpy.

Every hidden layer is ``Linear -> BatchNorm -> ReLU``; the latent heads and
the decoder output are plain linear maps. Parameters live in one ordered
``dict[str, ndarray]`` so the optimizer, the checkpoint writer and the
finite-difference checks can all walk the same layout.

Loss per batch of ``n`` inputs with ``D`` features and ``K`` latents::

    mse   = sum((x - x_rec)**2) / (n * D)
    kl    = sum(-0.5 * (1 + logvar - mu**2 - exp(logvar))) / n
    total = mse + beta * kl
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pcg-vae-checkpoint"
CHECKPOINT_VERSION = 1


class Mode(str, enum.Enum):
    BETA_VAE = "beta_vae"
    PLAIN_AE = "plain_ae"


class ModelError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, message, batch_index=None, epoch=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.epoch = epoch


@dataclass(frozen=True)
class LayerSpec:
    name: str
    in_dim: int
    out_dim: int
    activation: str  # "relu" | "identity"
    batch_norm: bool


class LatentDistribution(NamedTuple):
    mu: np.ndarray      # (n, K)
    logvar: np.ndarray  # (n, K); zeros in plain-AE mode


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    kl: float
    beta: float
    total: float


@dataclass
class TrainConfig:
    batch_size: int = 640
    epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ModelError("learning_rate must be positive")
        if self.epochs < 0:
            raise ModelError("epochs must be >= 0")
        if self.optimizer != "adam":
            raise ModelError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class VaeModel:
    input_dim: int = 70
    hidden: tuple[int, ...] = (32, 32, 16, 16)
    latent_dim: int = 16
    beta: float = 0.0
    mode: Mode = Mode.BETA_VAE
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9
    params: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    state: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.mode = Mode(self.mode)
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ModelError(f"beta must be finite and >= 0, got {self.beta}")
        if min((self.input_dim, self.latent_dim) + self.hidden) < 1:
            raise ModelError("layer dimensions must be positive")

    @property
    def encoder_layers(self) -> list[LayerSpec]:
        dims = (self.input_dim,) + self.hidden
        return [LayerSpec(f"enc{i}", a, b, "relu", True)
                for i, (a, b) in enumerate(zip(dims, dims[1:]))]

    @property
    def head_layers(self) -> list[LayerSpec]:
        src = self.hidden[-1] if self.hidden else self.input_dim
        heads = [LayerSpec("mu", src, self.latent_dim, "identity", False)]
        if self.mode is Mode.BETA_VAE:
            heads.append(LayerSpec("logvar", src, self.latent_dim, "identity", False))
        return heads

    @property
    def decoder_layers(self) -> list[LayerSpec]:
        dims = (self.latent_dim,) + self.hidden[::-1]
        layers = [LayerSpec(f"dec{i}", a, b, "relu", True)
                  for i, (a, b) in enumerate(zip(dims, dims[1:]))]
        layers.append(LayerSpec("out", dims[-1], self.input_dim, "identity", False))
        return layers

    @property
    def layers(self) -> list[LayerSpec]:
        return self.encoder_layers + self.head_layers + self.decoder_layers

    def copy(self) -> "VaeModel":
        return VaeModel(self.input_dim, self.hidden, self.latent_dim, self.beta, self.mode,
                        self.bn_eps, self.bn_momentum,
                        {k: v.copy() for k, v in self.params.items()},
                        {k: v.copy() for k, v in self.state.items()})


def parameter_names(layer: LayerSpec) -> list[str]:
    # a bias before batch norm is cancelled by the mean subtraction, so BN
    # layers carry only the BN shift
    if layer.batch_norm:
        return [f"{layer.name}.weight", f"{layer.name}.gamma", f"{layer.name}.shift"]
    return [f"{layer.name}.weight", f"{layer.name}.bias"]


def init_model(beta: float = 0.0, seed: int = 0, mode: Mode | str = Mode.BETA_VAE,
               input_dim: int = 70, hidden=(32, 32, 16, 16), latent_dim: int = 16) -> VaeModel:
    """Fresh model with He-uniform weights drawn from ``seed``."""
    model = VaeModel(input_dim, tuple(hidden), latent_dim, float(beta), Mode(mode))
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        limit = math.sqrt(6.0 / layer.in_dim)
        model.params[f"{layer.name}.weight"] = rng.uniform(-limit, limit, (layer.in_dim, layer.out_dim))
        if layer.batch_norm:
            model.params[f"{layer.name}.gamma"] = np.ones(layer.out_dim)
            model.params[f"{layer.name}.shift"] = np.zeros(layer.out_dim)
            model.state[f"{layer.name}.running_mean"] = np.zeros(layer.out_dim)
            model.state[f"{layer.name}.running_var"] = np.ones(layer.out_dim)
        else:
            model.params[f"{layer.name}.bias"] = np.zeros(layer.out_dim)
    return model


# -- forward / backward ----------------------------------------------------

def _as_batch(model: VaeModel, batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        x = np.stack([getattr(f, "values", f) for f in batch])
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ModelError(f"expected inputs of length {model.input_dim}, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ModelError("empty batch")
    return x


def _dense_forward(model, layer, h, training, cache, batch_stats):
    p = model.params
    a = h @ p[f"{layer.name}.weight"]
    if not layer.batch_norm:
        a = a + p[f"{layer.name}.bias"]
        cache[layer.name] = (h, None)
        return a
    if training:
        mean = a.mean(axis=0)
        var = a.var(axis=0)
        batch_stats[layer.name] = (mean, var)
    else:
        mean = model.state[f"{layer.name}.running_mean"]
        var = model.state[f"{layer.name}.running_var"]
    inv_std = 1.0 / np.sqrt(var + model.bn_eps)
    xhat = (a - mean) * inv_std
    y = p[f"{layer.name}.gamma"] * xhat + p[f"{layer.name}.shift"]
    cache[layer.name] = (h, (xhat, inv_std, y))
    return np.maximum(y, 0.0) if layer.activation == "relu" else y


def _dense_backward(model, layer, dout, training, cache, grads):
    p = model.params
    h, bn = cache[layer.name]
    if bn is None:
        grads[f"{layer.name}.bias"] = dout.sum(axis=0)
        da = dout
    else:
        xhat, inv_std, y = bn
        dy = dout * (y > 0) if layer.activation == "relu" else dout
        grads[f"{layer.name}.gamma"] = (dy * xhat).sum(axis=0)
        grads[f"{layer.name}.shift"] = dy.sum(axis=0)
        dxhat = dy * p[f"{layer.name}.gamma"]
        if training:
            n = dxhat.shape[0]
            da = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            da = dxhat * inv_std
    grads[f"{layer.name}.weight"] = h.T @ da
    return da @ p[f"{layer.name}.weight"].T


class _Pass(NamedTuple):
    x: np.ndarray
    recon: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    noise: np.ndarray
    cache: dict
    batch_stats: dict
    training: bool


def _forward(model: VaeModel, x: np.ndarray, noise, training: bool) -> _Pass:
    if training and x.shape[0] < 2:
        raise ModelError("batch statistics need at least 2 samples in training mode")
    cache, stats = {}, {}
    h = x
    for layer in model.encoder_layers:
        h = _dense_forward(model, layer, h, training, cache, stats)
    heads = model.head_layers
    mu = _dense_forward(model, heads[0], h, training, cache, stats)
    if model.mode is Mode.PLAIN_AE:
        logvar = np.zeros_like(mu)
        noise = np.zeros_like(mu)
        z = mu
    else:
        logvar = _dense_forward(model, heads[1], h, training, cache, stats)
        noise = np.zeros_like(mu) if noise is None else np.asarray(noise, dtype=np.float64)
        if noise.shape != mu.shape:
            raise ModelError(f"noise shape {noise.shape} does not match latent shape {mu.shape}")
        z = reparameterize(LatentDistribution(mu, logvar), noise)
    h = z
    for layer in model.decoder_layers:
        h = _dense_forward(model, layer, h, training, cache, stats)
    return _Pass(x, h, mu, logvar, noise, cache, stats, training)


def _kl_per_sample(mu, logvar):
    # -0.5 * (1 + lv - mu^2 - e^lv) rearranged so each term is >= 0 in floating point
    return 0.5 * np.sum(mu ** 2 + (np.expm1(logvar) - logvar), axis=1)


def _breakdown(model: VaeModel, fp: _Pass) -> LossBreakdown:
    mse = float(np.mean((fp.x - fp.recon) ** 2))
    kl = float(np.mean(_kl_per_sample(fp.mu, fp.logvar))) if model.mode is Mode.BETA_VAE else 0.0
    total = mse + model.beta * kl
    if not math.isfinite(total):
        raise NonFiniteError(f"non-finite loss (mse={mse}, kl={kl})")
    return LossBreakdown(mse, kl, model.beta, total)


def _backward(model: VaeModel, fp: _Pass) -> dict[str, np.ndarray]:
    n, d = fp.x.shape
    grads: dict[str, np.ndarray] = {}
    dh = 2.0 * (fp.recon - fp.x) / (n * d)
    for layer in reversed(model.decoder_layers):
        dh = _dense_backward(model, layer, dh, fp.training, fp.cache, grads)
    heads = model.head_layers
    if model.mode is Mode.PLAIN_AE:
        dh = _dense_backward(model, heads[0], dh, fp.training, fp.cache, grads)
    else:
        std = np.exp(0.5 * fp.logvar)
        dmu = dh + model.beta * fp.mu / n
        dlogvar = dh * fp.noise * 0.5 * std + model.beta * 0.5 * (np.exp(fp.logvar) - 1.0) / n
        dh = (_dense_backward(model, heads[0], dmu, fp.training, fp.cache, grads)
              + _dense_backward(model, heads[1], dlogvar, fp.training, fp.cache, grads))
    for layer in reversed(model.encoder_layers):
        dh = _dense_backward(model, layer, dh, fp.training, fp.cache, grads)
    return {k: grads[k] for k in model.params}


# -- public operations ------------------------------------------------------

def encode(model: VaeModel, batch, training: bool = False) -> LatentDistribution:
    x = _as_batch(model, batch)
    if training and x.shape[0] < 2:
        raise ModelError("batch statistics need at least 2 samples in training mode")
    cache, stats = {}, {}
    h = x
    for layer in model.encoder_layers:
        h = _dense_forward(model, layer, h, training, cache, stats)
    heads = model.head_layers
    mu = _dense_forward(model, heads[0], h, training, cache, stats)
    if model.mode is Mode.PLAIN_AE:
        return LatentDistribution(mu, np.zeros_like(mu))
    return LatentDistribution(mu, _dense_forward(model, heads[1], h, training, cache, stats))


def reparameterize(latent: LatentDistribution, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    mu = np.asarray(latent.mu)
    if noise.shape[-1] != mu.shape[-1]:
        raise ModelError(f"noise has {noise.shape[-1]} dims, latent has {mu.shape[-1]}")
    return mu + np.exp(0.5 * np.asarray(latent.logvar)) * noise


def decode(model: VaeModel, z, training: bool = False) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != model.latent_dim:
        raise ModelError(f"expected latent vectors of length {model.latent_dim}, got {z.shape[1]}")
    if training and z.shape[0] < 2:
        raise ModelError("batch statistics need at least 2 samples in training mode")
    cache, stats = {}, {}
    h = z
    for layer in model.decoder_layers:
        h = _dense_forward(model, layer, h, training, cache, stats)
    return h


def loss(model: VaeModel, batch, noise=None, training: bool = True) -> LossBreakdown:
    """Loss of one batch; ``noise=None`` means zero noise (latent = mean)."""
    return _breakdown(model, _forward(model, _as_batch(model, batch), noise, training))


def loss_gradients(model: VaeModel, batch, noise=None, training: bool = True) -> dict[str, np.ndarray]:
    fp = _forward(model, _as_batch(model, batch), noise, training)
    _breakdown(model, fp)
    return _backward(model, fp)


def loss_and_gradients(model: VaeModel, batch, noise=None, training: bool = True):
    fp = _forward(model, _as_batch(model, batch), noise, training)
    return _breakdown(model, fp), _backward(model, fp), fp.batch_stats


def infer(model: VaeModel, batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic pass: running BN stats, latent = mu.

    Returns per-sample reconstruction MSE, per-sample KL, and the
    reconstructions.
    """
    fp = _forward(model, _as_batch(model, batch), None, training=False)
    recon_loss = np.mean((fp.x - fp.recon) ** 2, axis=1)
    if model.mode is Mode.PLAIN_AE:
        kl = np.zeros(fp.x.shape[0])
    else:
        kl = _kl_per_sample(fp.mu, fp.logvar)
    return recon_loss, kl, fp.recon


# -- training ---------------------------------------------------------------

class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class TrainingDiverged(NonFiniteError):
    pass


def _update_running_stats(model: VaeModel, batch_stats) -> None:
    m = model.bn_momentum
    for name, (mean, var) in batch_stats.items():
        rm, rv = f"{name}.running_mean", f"{name}.running_var"
        model.state[rm] = m * model.state[rm] + (1.0 - m) * mean
        model.state[rv] = m * model.state[rv] + (1.0 - m) * var


def train(model: VaeModel, frames, config: TrainConfig = TrainConfig(), progress=None):
    """Adam over shuffled mini-batches; returns ``(trained_copy, history)``.

    ``history`` holds one sample-weighted mean :class:`LossBreakdown` per
    epoch. A trailing batch of one sample is dropped since batch norm has
    no statistics for it.
    """
    x = _as_batch(model, frames)
    model = model.copy()
    rng = np.random.default_rng([config.seed, 1])
    opt = Adam(model.params, lr=config.learning_rate)
    history = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        seen = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            if idx.size < 2:
                continue
            noise = rng.standard_normal((idx.size, model.latent_dim)) if model.mode is Mode.BETA_VAE else None
            try:
                lb, grads, stats = loss_and_gradients(model, x[idx], noise, training=True)
            except (NonFiniteError, FloatingPointError) as exc:
                raise TrainingDiverged(f"training diverged at epoch {epoch}, batch {b}: {exc}",
                                       batch_index=b, epoch=epoch) from exc
            opt.step(model.params, grads)
            _update_running_stats(model, stats)
            sums += idx.size * np.array([lb.mse, lb.kl, lb.total])
            seen += idx.size
        if seen == 0:
            raise ModelError("need at least 2 frames to train")
        mse, kl, total = (float(v) for v in sums / seen)
        history.append(LossBreakdown(mse, kl, model.beta, total))
        if progress is not None:
            progress(epoch, history[-1])
        log.debug("epoch %d mse=%.5f kl=%.5f total=%.5f", epoch, mse, kl, total)
    return model, history


# -- checkpoints --------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _decode_array(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def dumps_checkpoint(model: VaeModel, train_config: TrainConfig | None = None) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": model.mode.value,
        "beta": float(model.beta),
        "input_dim": model.input_dim,
        "hidden": list(model.hidden),
        "latent_dim": model.latent_dim,
        "bn_eps": model.bn_eps,
        "bn_momentum": model.bn_momentum,
        "train_config": asdict(train_config) if train_config is not None else None,
        "params": {k: _encode_array(v) for k, v in model.params.items()},
        "state": {k: _encode_array(v) for k, v in model.state.items()},
    }
    return json.dumps(doc, indent=1) + "\n"


def loads_checkpoint(text: str) -> tuple[VaeModel, TrainConfig | None]:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ModelError("not a pcg-vae checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {doc.get('version')}")
    model = VaeModel(doc["input_dim"], tuple(doc["hidden"]), doc["latent_dim"], doc["beta"],
                     Mode(doc["mode"]), doc["bn_eps"], doc["bn_momentum"],
                     {k: _decode_array(v) for k, v in doc["params"].items()},
                     {k: _decode_array(v) for k, v in doc["state"].items()})
    expected = [n for layer in model.layers for n in parameter_names(layer)]
    if sorted(expected) != sorted(model.params):
        raise ModelError("checkpoint parameters do not match its architecture")
    cfg = doc.get("train_config")
    return model, (TrainConfig(**cfg) if cfg is not None else None)


def save_checkpoint(path, model: VaeModel, train_config: TrainConfig | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_checkpoint(model, train_config))


def load_checkpoint(path) -> tuple[VaeModel, TrainConfig | None]:
    with open(path) as fh:
        return loads_checkpoint(fh.read())

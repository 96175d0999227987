"""MLP autoencoder, reconstruction loss and the latent regularizers.

Checkpoint layout (little-endian)::

    b"MDLP" | u32 version=1 | u32 n_encoder_layers | u32 n_decoder_layers
    then per layer, encoder first: u32 fan_in | u32 fan_out
                                   | fan_in*fan_out float64 weights (row-major)
                                   | fan_out float64 biases
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .data import FormatError
from .diffcore import DimensionError, Tensor
from .kernels import KernelSpec
from .mmd import BIASED, mmd_loss
from .priors import PriorSpec, sample_prior

REGULARIZERS = ("mmd", "batch_kld", "none")
KLD_JITTER = 1e-6

MDLP_MAGIC = b"MDLP"
MDLP_VERSION = 1


class RegularizerDegenerateError(ValueError):
    """Batch statistics are singular for the requested regularizer."""


@dataclass
class Layer:
    W: Tensor
    b: Tensor


@dataclass
class ModelParams:
    encoder: list[Layer]
    decoder: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.encoder[0].W.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1].W.shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [layer.W.shape[1] for layer in self.encoder]

    def tensors(self) -> list[Tensor]:
        return [t for layer in self.encoder + self.decoder for t in (layer.W, layer.b)]

    def copy(self) -> "ModelParams":
        def dup(layers):
            return [Layer(Tensor(l.W.data.copy(), True), Tensor(l.b.data.copy(), True)) for l in layers]
        return ModelParams(dup(self.encoder), dup(self.decoder))


def _layer(fan_in: int, fan_out: int, rng: np.random.Generator) -> Layer:
    bound = np.sqrt(6.0 / fan_in)
    W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return Layer(Tensor(W, requires_grad=True), Tensor(b, requires_grad=True))


def init_params(input_dim: int, latent_dim: int, hidden=(256, 256, 64),
                rng: np.random.Generator | None = None) -> ModelParams:
    """Symmetric MLP: ``input → hidden... → latent`` and the mirror image back.

    Weights are drawn uniformly with fan-in scaling ``sqrt(6 / fan_in)``;
    biases start at zero.
    """
    rng = np.random.default_rng() if rng is None else rng
    widths = [input_dim, *hidden, latent_dim]
    enc = [_layer(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
    back = widths[::-1]
    dec = [_layer(a, b, rng) for a, b in zip(back[:-1], back[1:])]
    return ModelParams(enc, dec)


def set_output_bias(params: ModelParams, mean_output: np.ndarray, eps: float = 1e-3) -> None:
    """Start the decoder at the data mean: output bias = logit(mean pixel).

    Sparse images otherwise drive the sigmoid outputs into a flat, dead start.
    """
    p = np.clip(np.asarray(mean_output, dtype=np.float64).reshape(-1), eps, 1.0 - eps)
    params.decoder[-1].b.data[:] = np.log(p / (1.0 - p))


def _flatten(x) -> Tensor:
    if isinstance(x, Tensor):
        return x if x.ndim == 2 else Tensor(x.data.reshape(x.shape[0], -1))
    x = np.asarray(x, dtype=np.float64)
    return Tensor(x.reshape(x.shape[0], -1))


def _mlp(layers: list[Layer], h: Tensor, out_act) -> Tensor:
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        if h.shape[1] != layer.W.shape[0]:
            raise DimensionError(f"layer {i} expects width {layer.W.shape[0]}, got input {h.shape}")
        h = h @ layer.W + layer.b
        h = out_act(h) if i == last else dc.relu(h)
    return h


def encode(params: ModelParams, x) -> Tensor:
    """Deterministic encoder; ``x`` is ``(n, h, w)`` or already flattened."""
    return _mlp(params.encoder, _flatten(x), lambda t: t)


def decode(params: ModelParams, z) -> Tensor:
    return _mlp(params.decoder, dc.as_tensor(z), dc.sigmoid)


def encode_array(params: ModelParams, x, batch_size: int = 2048) -> np.ndarray:
    """Encode without recording anything; returns a plain array."""
    flat = _flatten(x).data
    return np.concatenate([encode(params, flat[i:i + batch_size]).data
                           for i in range(0, flat.shape[0], batch_size)], axis=0)


def reconstruct_array(params: ModelParams, x, batch_size: int = 2048) -> np.ndarray:
    flat = _flatten(x).data
    return np.concatenate([decode(params, encode(params, flat[i:i + batch_size])).data
                           for i in range(0, flat.shape[0], batch_size)], axis=0)


def reconstruction_loss(x, x_hat) -> Tensor:
    """Mean squared error over batch and pixels."""
    x, x_hat = dc.as_tensor(x), dc.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"reconstruction shapes differ: {x.shape} vs {x_hat.shape}")
    return dc.reduce_mean(dc.square(x - x_hat))


@dataclass
class BatchStats:
    mean: Tensor
    cov: Tensor


def batch_stats(z) -> BatchStats:
    """Sample mean and unbiased (n-1) covariance of a latent batch."""
    z = dc.as_tensor(z)
    n = z.shape[0]
    if n < 2:
        raise ValueError(f"batch statistics need n >= 2, got {n}")
    mu = dc.reduce_mean(z, axis=0)
    centered = z - mu
    cov = (centered.T @ centered) * (1.0 / (n - 1))
    return BatchStats(mu, cov)


def batch_kld(z) -> Tensor:
    """KL(N(mean, cov) || N(0, I)) from batch moments.

    The covariance gets ``1e-6·I`` added before both trace and log-det, so the
    penalty stays a true Gaussian KL (non-negative).
    """
    z = dc.as_tensor(z)
    n, d = z.shape
    if n <= d:
        raise RegularizerDegenerateError(
            f"batch_kld needs batch size > latent dim (got batch {n}, d={d})")
    stats = batch_stats(z)
    cov = stats.cov + KLD_JITTER * np.eye(d)
    try:
        ld = dc.logdet(cov)
    except np.linalg.LinAlgError as exc:
        raise RegularizerDegenerateError(f"batch covariance is singular: {exc}") from exc
    total = dc.trace(cov) + dc.reduce_sum(dc.square(stats.mean)) - ld
    return (total - float(d)) * 0.5


@dataclass
class LossTerms:
    total: Tensor
    reconstruction: Tensor
    penalty: Tensor | None


def loss_terms(params: ModelParams, x, prior: PriorSpec | None, lam: float,
               regularizer: str = "mmd", kernel: KernelSpec | None = None,
               rng: np.random.Generator | None = None, estimator: str = BIASED,
               prior_batch: np.ndarray | None = None) -> LossTerms:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if regularizer not in REGULARIZERS:
        raise ValueError(f"unknown regularizer {regularizer!r}; expected one of {REGULARIZERS}")
    x = _flatten(x)
    z = encode(params, x)
    recon = reconstruction_loss(x, decode(params, z))
    if regularizer == "none":
        return LossTerms(recon, recon, None)
    if regularizer == "mmd":
        if prior_batch is None:
            if prior is None:
                raise ValueError("mmd regularizer needs a prior")
            if prior.d != z.shape[1]:
                raise DimensionError(f"prior has d={prior.d} but the encoder outputs d={z.shape[1]}")
            prior_batch = sample_prior(prior, z.shape[0], rng)
        penalty = mmd_loss(z, prior_batch, kernel or KernelSpec(), estimator)
    else:
        penalty = batch_kld(z)
    return LossTerms(recon + penalty * float(lam), recon, penalty)


def total_loss(params: ModelParams, x, prior: PriorSpec | None, lam: float,
               regularizer: str = "mmd", kernel: KernelSpec | None = None,
               rng: np.random.Generator | None = None, estimator: str = BIASED) -> Tensor:
    """Reconstruction MSE plus ``lam`` times the chosen latent penalty."""
    return loss_terms(params, x, prior, lam, regularizer, kernel, rng, estimator).total


# ------------------------------------------------------------------ checkpoints

def encode_checkpoint(params: ModelParams) -> bytes:
    parts = [MDLP_MAGIC, struct.pack("<III", MDLP_VERSION, len(params.encoder), len(params.decoder))]
    for layer in params.encoder + params.decoder:
        fan_in, fan_out = layer.W.shape
        parts.append(struct.pack("<II", fan_in, fan_out))
        parts.append(layer.W.data.astype("<f8").tobytes())
        parts.append(layer.b.data.astype("<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> ModelParams:
    buf = bytes(buf)
    if len(buf) < 16 or buf[:4] != MDLP_MAGIC:
        raise FormatError(f"not a model checkpoint (magic {buf[:4]!r}, expected {MDLP_MAGIC!r})")
    version, n_enc, n_dec = struct.unpack_from("<III", buf, 4)
    if version != MDLP_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at byte offset 4")
    if n_enc < 1 or n_dec < 1:
        raise FormatError(f"checkpoint declares {n_enc} encoder and {n_dec} decoder layers at byte offset 8")
    off = 16
    layers = []
    for k in range(n_enc + n_dec):
        if off + 8 > len(buf):
            raise FormatError(f"checkpoint truncated in layer {k} header at byte offset {off}")
        fan_in, fan_out = struct.unpack_from("<II", buf, off)
        off += 8
        need = 8 * (fan_in * fan_out + fan_out)
        if off + need > len(buf):
            raise FormatError(f"checkpoint truncated in layer {k} payload at byte offset {off}")
        W = np.frombuffer(buf, "<f8", fan_in * fan_out, off).reshape(fan_in, fan_out).astype(np.float64)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(buf, "<f8", fan_out, off).astype(np.float64)
        off += 8 * fan_out
        layers.append(Layer(Tensor(W, True), Tensor(b, True)))
    if off != len(buf):
        raise FormatError(f"checkpoint has trailing bytes after offset {off}")
    params = ModelParams(layers[:n_enc], layers[n_enc:])
    if params.encoder[-1].W.shape[1] != params.decoder[0].W.shape[0]:
        raise FormatError("checkpoint encoder output width does not match decoder input width")
    return params


def save_checkpoint(path, params: ModelParams) -> None:
    Path(path).write_bytes(encode_checkpoint(params))


def load_checkpoint(path) -> ModelParams:
    return decode_checkpoint(Path(path).read_bytes())

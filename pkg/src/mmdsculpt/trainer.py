"""Adam training loop for the regularized autoencoder, plus evaluation."""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .data import FactorTable, write_latent_dump
from .kernels import KernelSpec
from .metrics import (
    covariance_ratio,
    distribution_report,
    lps_mlp,
    mig,
    nmse,
    write_metrics_csv,
)
from .mmd import BIASED, ESTIMATORS, mmd2_biased, mmd2_unbiased
from .models import (
    REGULARIZERS,
    ModelParams,
    encode_array,
    init_params,
    loss_terms,
    reconstruct_array,
    save_checkpoint,
    set_output_bias,
)
from .optim import AdamState, adam_step
from .priors import PriorSpec, sample_prior

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


# --------------------------------------------------------------------- config

@dataclass
class TrainConfig:
    lam: float = 0.3
    batch_size: int = 512
    lr: float = 5e-4
    epochs: int = 100
    regularizer: str = "mmd"
    estimator: str = BIASED
    kernel: KernelSpec = field(default_factory=KernelSpec)
    hidden: tuple[int, ...] = (256, 256, 64)
    latent_dim: int = 2
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")


@dataclass
class EpochRecord:
    epoch: int
    recon: float
    penalty: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)

    def append(self, rec: EpochRecord) -> None:
        if self.epochs and rec.epoch <= self.epochs[-1].epoch:
            raise ValueError("epoch indices must be strictly increasing")
        self.epochs.append(rec)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "recon", "penalty", "seconds"])
            for r in self.epochs:
                w.writerow([r.epoch, repr(r.recon), repr(r.penalty), f"{r.seconds:.3f}"])


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for each consumer of randomness, split from one root seed."""
    names = ("data", "init", "shuffle", "prior", "eval")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


# ---------------------------------------------------------------------- train

def train(config: TrainConfig, data: np.ndarray, prior: PriorSpec | None = None,
          out_dir=None, params: ModelParams | None = None,
          rngs: dict[str, np.random.Generator] | None = None,
          progress=None) -> tuple[ModelParams, TrainLog]:
    """Optimize reconstruction + lam·penalty with Adam over shuffled mini-batches.

    ``data`` is ``(n, h, w)`` or ``(n, features)`` in [0, 1]. A fresh prior
    batch, the same size as the encoded batch, is drawn at every step.
    Checkpoints go to ``out_dir`` every ``checkpoint_every`` epochs and at the end.
    """
    rngs = rngs or seed_streams(config.seed)
    x = np.asarray(data, dtype=np.float64).reshape(len(data), -1)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 training samples, got {n}")
    if config.regularizer == "mmd":
        if prior is None:
            raise ValueError("mmd regularizer needs a prior")
        if prior.d != config.latent_dim:
            raise ValueError(f"prior d={prior.d} does not match latent_dim={config.latent_dim}")
    batch_size = config.batch_size
    if n < batch_size:
        warnings.warn(f"dataset has {n} samples, smaller than batch_size {batch_size}; using {n}",
                      stacklevel=2)
        batch_size = n
    min_batch = config.latent_dim + 1 if config.regularizer == "batch_kld" else 2

    if params is None:
        params = init_params(x.shape[1], config.latent_dim, config.hidden, rngs["init"])
        set_output_bias(params, x.mean(axis=0))
    tensors = params.tensors()
    state = AdamState.zeros_like([t.data for t in tensors])
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    history = TrainLog()

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rngs["shuffle"].permutation(n)
        recon_sum = pen_sum = 0.0
        steps = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            if idx.size < min_batch:
                continue
            with dc.Tape() as tape:
                terms = loss_terms(params, x[idx], prior, config.lam, config.regularizer,
                                   config.kernel, rngs["prior"], config.estimator)
            total = terms.total.item()
            if not np.isfinite(total):
                raise DivergenceError(f"non-finite loss {total} at epoch {epoch}, step {steps + 1}")
            dc.backward(tape, terms.total)
            adam_step([t.data for t in tensors], [t.grad for t in tensors], state, config.lr)
            if not all(np.isfinite(t.data).all() for t in tensors):
                raise DivergenceError(f"non-finite parameters after epoch {epoch}, step {steps + 1}")
            recon_sum += terms.reconstruction.item()
            pen_sum += terms.penalty.item() if terms.penalty is not None else 0.0
            steps += 1
        rec = EpochRecord(epoch, recon_sum / steps, pen_sum / steps, time.perf_counter() - t0)
        history.append(rec)
        if progress is not None:
            progress(rec)
        if out_dir is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint_epoch{epoch:04d}.mdlp", params)

    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.mdlp", params)
        history.to_csv(out_dir / "train_log.csv")
    return params, history


# ------------------------------------------------------------------- evaluate

@dataclass
class EvalOptions:
    lps_split: float = 0.8
    lps_epochs: int = 200
    mig_bins: int = 20
    mmd_samples: int = 1024
    seed: int = 0


def evaluate(params: ModelParams, data: np.ndarray, prior: PriorSpec | None = None,
             kernel: KernelSpec | None = None, factors: FactorTable | None = None,
             out_dir=None, options: EvalOptions | None = None) -> dict[str, float]:
    """Encode the whole dataset and compute the metrics block.

    Writes ``metrics.csv``, ``latents.ltnt`` and the distribution report when
    ``out_dir`` is given.
    """
    options = options or EvalOptions()
    kernel = kernel or KernelSpec()
    x = np.asarray(data, dtype=np.float64).reshape(len(data), -1)
    z = encode_array(params, x)
    x_hat = reconstruct_array(params, x)
    rng = np.random.default_rng(np.random.SeedSequence(options.seed).spawn(1)[0])

    lin, db = nmse(x, x_hat)
    out: dict[str, float] = {"nmse_linear": lin, "nmse_db": db}
    if z.shape[1] >= 2:
        report = lps_mlp(z, split=options.lps_split, seed=options.seed, epochs=options.lps_epochs)
        out["lps_mlp"] = report.lps
        for i, r2 in enumerate(report.r2):
            out[f"lps_r2_dim{i}"] = r2
        out["covariance_ratio"] = covariance_ratio(z)
    if factors is not None:
        out["mig"] = mig(z, factors, bins=options.mig_bins)
    if prior is not None and z.shape[0] >= 2:
        k = min(options.mmd_samples, z.shape[0])
        zs = z[rng.choice(z.shape[0], size=k, replace=False)]
        zp = sample_prior(prior, k, rng)
        out["mmd2_biased"] = mmd2_biased(zs, zp, kernel).value
        out["mmd2_unbiased"] = mmd2_unbiased(zs, zp, kernel).value
    out["min_latent_std"] = float(z.std(axis=0).min())

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out_dir / "metrics.csv", out)
        write_latent_dump(out_dir / "latents.ltnt", z)
        distribution_report(z, out_dir)
    return out

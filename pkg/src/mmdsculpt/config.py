"""Experiment config documents (JSON) and dataset construction.

Example::

    {
      "seed": 0,
      "output_dir": "runs/xy_gauss",
      "dataset": {"kind": "XY", "n": 5000, "resolution": 32},
      "model": {"latent_dim": 2, "hidden": [256, 256, 64]},
      "train": {"lambda": 0.3, "batch_size": 512, "lr": 5e-4, "epochs": 200,
                "regularizer": "mmd", "estimator": "biased", "checkpoint_every": 0},
      "kernel": {"bandwidth": "median", "multipliers": [0.5, 1.0, 2.0]},
      "prior": {"dims": [{"gaussian": {"mu": 0, "sigma": 1}},
                         {"gaussian": {"mu": 0, "sigma": 1}}]},
      "metrics": {"lps_epochs": 200, "lps_split": 0.8, "mig_bins": 20, "mmd_samples": 1024}
    }

``dataset.kind`` is one of XY, XYC, XYCS or ``idx`` (with ``path`` and
optional ``limit``). Relative paths resolve against the config file.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import VARIANTS, FactorTable, generate_xy_family, load_idx
from .kernels import DEFAULT_MULTIPLIERS, KernelSpec
from .mmd import ESTIMATORS
from .models import REGULARIZERS
from .priors import PriorConfigError, PriorSpec, parse_prior
from .trainer import EvalOptions, TrainConfig

OUTPUT_ROOT_ENV = "LS_OUT"


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class DatasetSpec:
    kind: str = "XY"
    n: int = 5000
    resolution: int = 32
    path: Path | None = None
    limit: int | None = None


@dataclass
class ExperimentConfig:
    train: TrainConfig
    dataset: DatasetSpec
    prior: PriorSpec
    output_dir: Path
    metrics: EvalOptions = field(default_factory=EvalOptions)
    source: Path | None = None


def _get(doc: dict, key: str, kinds, where: str, default=None):
    if key not in doc:
        return default
    v = doc[key]
    if isinstance(v, bool) and bool not in kinds:
        raise ConfigError(f"{where}.{key}", f"expected {kinds}, got {v!r}")
    if not isinstance(v, kinds):
        raise ConfigError(f"{where}.{key}", f"expected {kinds}, got {v!r}")
    return v


def _section(doc: dict, key: str) -> dict:
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(key, "expected an object")
    return sec


def parse_dataset(sec: dict, base: Path) -> DatasetSpec:
    kind = _get(sec, "kind", (str,), "dataset", "XY")
    if kind.upper() in VARIANTS:
        n = _get(sec, "n", (int,), "dataset", 5000)
        res = _get(sec, "resolution", (int,), "dataset", 32)
        if n < 2:
            raise ConfigError("dataset.n", f"must be >= 2, got {n}")
        if res < 16:
            raise ConfigError("dataset.resolution", f"must be >= 16, got {res}")
        return DatasetSpec(kind.upper(), n, res)
    if kind.lower() == "idx":
        path = _get(sec, "path", (str,), "dataset")
        if path is None:
            raise ConfigError("dataset.path", "required for kind 'idx'")
        p = Path(path)
        p = p if p.is_absolute() else base / p
        if not p.exists():
            raise ConfigError("dataset.path", f"file not found: {p}")
        limit = _get(sec, "limit", (int,), "dataset")
        return DatasetSpec("idx", path=p, limit=limit)
    raise ConfigError("dataset.kind", f"unknown dataset kind {kind!r}")


def parse_kernel(sec: dict) -> KernelSpec:
    bw = sec.get("bandwidth", "median")
    mults = _get(sec, "multipliers", (list,), "kernel", list(DEFAULT_MULTIPLIERS))
    if bw != "median" and (isinstance(bw, bool) or not isinstance(bw, (int, float))):
        raise ConfigError("kernel.bandwidth", f"expected 'median' or a positive number, got {bw!r}")
    try:
        return KernelSpec(tuple(mults), None if bw == "median" else float(bw))
    except (TypeError, ValueError) as exc:
        field = "kernel.bandwidth" if "sigma" in str(exc) else "kernel.multipliers"
        raise ConfigError(field, str(exc)) from exc


def parse_experiment(doc: dict, base: Path | None = None, seed: int | None = None,
                     output_dir=None) -> ExperimentConfig:
    """Validate a decoded config document; flag overrides win over the document."""
    base = base or Path.cwd()
    if not isinstance(doc, dict):
        raise ConfigError("config", "expected a JSON object")
    seed = seed if seed is not None else _get(doc, "seed", (int,), "config", 0)
    model = _section(doc, "model")
    tr = _section(doc, "train")
    met = _section(doc, "metrics")

    latent_dim = _get(model, "latent_dim", (int,), "model", 2)
    hidden = _get(model, "hidden", (list,), "model", [256, 256, 64])
    if latent_dim < 1:
        raise ConfigError("model.latent_dim", f"must be >= 1, got {latent_dim}")
    if not all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in hidden):
        raise ConfigError("model.hidden", f"expected positive integers, got {hidden!r}")

    lam = _get(tr, "lambda", (int, float), "train", 0.3)
    if lam < 0:
        raise ConfigError("train.lambda", f"must be >= 0, got {lam}")
    batch_size = _get(tr, "batch_size", (int,), "train", 512)
    if batch_size < 2:
        raise ConfigError("train.batch_size", f"must be >= 2, got {batch_size}")
    lr = _get(tr, "lr", (int, float), "train", 5e-4)
    if lr <= 0:
        raise ConfigError("train.lr", f"must be > 0, got {lr}")
    epochs = _get(tr, "epochs", (int,), "train", 100)
    if epochs < 1:
        raise ConfigError("train.epochs", f"must be >= 1, got {epochs}")
    regularizer = _get(tr, "regularizer", (str,), "train", "mmd")
    if regularizer not in REGULARIZERS:
        raise ConfigError("train.regularizer", f"expected one of {REGULARIZERS}, got {regularizer!r}")
    estimator = _get(tr, "estimator", (str,), "train", "biased")
    if estimator not in ESTIMATORS:
        raise ConfigError("train.estimator", f"expected one of {ESTIMATORS}, got {estimator!r}")
    ckpt_every = _get(tr, "checkpoint_every", (int,), "train", 0)

    kernel = parse_kernel(_section(doc, "kernel"))
    dataset = parse_dataset(_section(doc, "dataset"), base)

    if "prior" in doc:
        try:
            prior = parse_prior(doc["prior"], base)
        except PriorConfigError as exc:
            raise ConfigError(f"prior.{exc.field}", str(exc).split(": ", 1)[-1]) from exc
        if prior.d != latent_dim:
            raise ConfigError("prior", f"prior has d={prior.d} but model.latent_dim={latent_dim}")
    else:
        prior = PriorSpec.standard_normal(latent_dim)

    metrics = EvalOptions(
        lps_split=_get(met, "lps_split", (int, float), "metrics", 0.8),
        lps_epochs=_get(met, "lps_epochs", (int,), "metrics", 200),
        mig_bins=_get(met, "mig_bins", (int,), "metrics", 20),
        mmd_samples=_get(met, "mmd_samples", (int,), "metrics", 1024),
        seed=seed,
    )
    if not 0 < metrics.lps_split < 1:
        raise ConfigError("metrics.lps_split", f"must be in (0, 1), got {metrics.lps_split}")

    train_cfg = TrainConfig(lam=float(lam), batch_size=batch_size, lr=float(lr), epochs=epochs,
                            regularizer=regularizer, estimator=estimator, kernel=kernel,
                            hidden=tuple(hidden), latent_dim=latent_dim, seed=seed,
                            checkpoint_every=ckpt_every)
    out = resolve_output_dir(output_dir if output_dir is not None
                             else _get(doc, "output_dir", (str,), "config", "runs/default"))
    return ExperimentConfig(train_cfg, dataset, prior, out, metrics)


def resolve_output_dir(path) -> Path:
    """Relative output dirs resolve under ``$LS_OUT`` when set, else the cwd."""
    p = Path(path)
    if p.is_absolute():
        return p
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / p if root else p


def load_experiment(path, seed: int | None = None, output_dir=None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    cfg = parse_experiment(doc, path.parent, seed, output_dir)
    cfg.source = path
    return cfg


def build_dataset(spec: DatasetSpec, rng: np.random.Generator) -> tuple[np.ndarray, FactorTable | None]:
    if spec.kind == "idx":
        return load_idx(spec.path, spec.limit), None
    return generate_xy_family(spec.kind, spec.n, spec.resolution, rng)

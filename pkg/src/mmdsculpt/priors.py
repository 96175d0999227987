"""Programmable priors: per-dimension Gaussian / Uniform / GMM, or an empirical dump.

Config documents are JSON::

    {"dims": [{"gaussian": {"mu": 0, "sigma": 2}},
              {"uniform": {"lo": -5, "hi": 5}},
              {"gmm": {"components": [{"weight": 1, "mu": -10, "sigma": 1},
                                      {"weight": 1, "mu": 10, "sigma": 1}]}}]}

or ``{"empirical": {"path": "teacher.ltnt"}}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .data import read_latent_dump, write_latent_dump


class PriorConfigError(ValueError):
    """Prior config does not match the schema; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, size=n)

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def var(self) -> float:
        return self.sigma ** 2


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0


@dataclass(frozen=True)
class GMM:
    weights: tuple[float, ...]
    mus: tuple[float, ...]
    sigmas: tuple[float, ...]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return rng.normal(np.asarray(self.mus)[comp], np.asarray(self.sigmas)[comp])

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.mus))

    @property
    def var(self) -> float:
        w, mu, s = map(np.asarray, (self.weights, self.mus, self.sigmas))
        return float(np.dot(w, s ** 2 + mu ** 2) - np.dot(w, mu) ** 2)


DimPrior = Union[Gaussian, Uniform, GMM]


@dataclass(frozen=True)
class EmpiricalPrior:
    path: Path
    table: np.ndarray

    @property
    def d(self) -> int:
        return self.table.shape[1]


@dataclass(frozen=True)
class PriorSpec:
    dims: tuple[DimPrior, ...] | None = None
    empirical: EmpiricalPrior | None = None

    def __post_init__(self):
        if (self.dims is None) == (self.empirical is None):
            raise ValueError("PriorSpec needs exactly one of dims or empirical")

    @property
    def d(self) -> int:
        return len(self.dims) if self.dims is not None else self.empirical.d

    @classmethod
    def standard_normal(cls, d: int) -> "PriorSpec":
        return cls(dims=tuple(Gaussian(0.0, 1.0) for _ in range(d)))

    @classmethod
    def from_dump(cls, path) -> "PriorSpec":
        path = Path(path)
        table = read_latent_dump(path).astype(np.float64)
        if table.shape[0] == 0:
            raise PriorConfigError("empirical.path", f"dump {path} holds no rows")
        return cls(empirical=EmpiricalPrior(path, table))


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``n × d`` batch from ``spec``."""
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    if spec.empirical is not None:
        table = spec.empirical.table
        return table[rng.integers(0, table.shape[0], size=n)]
    out = np.empty((n, spec.d))
    for j, dim in enumerate(spec.dims):
        out[:, j] = dim.sample(n, rng)
    return out


# ------------------------------------------------------------------ config I/O

def _number(obj: dict, key: str, field: str) -> float:
    if key not in obj:
        raise PriorConfigError(f"{field}.{key}", "missing")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise PriorConfigError(f"{field}.{key}", f"expected a finite number, got {v!r}")
    return float(v)


def _positive(obj: dict, key: str, field: str) -> float:
    v = _number(obj, key, field)
    if v <= 0:
        raise PriorConfigError(f"{field}.{key}", f"must be > 0, got {v}")
    return v


def _parse_dim(entry, field: str) -> DimPrior:
    if not isinstance(entry, dict) or len(entry) != 1:
        raise PriorConfigError(field, "each dim must be an object with exactly one of gaussian|uniform|gmm")
    (kind, body), = entry.items()
    field = f"{field}.{kind}"
    if not isinstance(body, dict):
        raise PriorConfigError(field, "expected an object")
    if kind == "gaussian":
        return Gaussian(_number(body, "mu", field), _positive(body, "sigma", field))
    if kind == "uniform":
        lo, hi = _number(body, "lo", field), _number(body, "hi", field)
        if lo >= hi:
            raise PriorConfigError(f"{field}.lo", f"lo must be < hi (got lo={lo}, hi={hi})")
        return Uniform(lo, hi)
    if kind == "gmm":
        comps = body.get("components")
        if not isinstance(comps, list) or not comps:
            raise PriorConfigError(f"{field}.components", "must be a non-empty list")
        ws, mus, sigmas = [], [], []
        for k, c in enumerate(comps):
            cf = f"{field}.components[{k}]"
            if not isinstance(c, dict):
                raise PriorConfigError(cf, "expected an object")
            ws.append(_positive(c, "weight", cf))
            mus.append(_number(c, "mu", cf))
            sigmas.append(_positive(c, "sigma", cf))
        total = sum(ws)
        return GMM(tuple(w / total for w in ws), tuple(mus), tuple(sigmas))
    raise PriorConfigError(field, f"unknown prior kind {kind!r} (expected gaussian, uniform or gmm)")


def parse_prior(doc, base_dir: Path | None = None) -> PriorSpec:
    """Validate an already-decoded prior document."""
    if not isinstance(doc, dict):
        raise PriorConfigError("prior", "expected a JSON object")
    keys = set(doc) & {"dims", "empirical"}
    if len(keys) != 1:
        raise PriorConfigError("prior", "needs exactly one of 'dims' or 'empirical'")
    if "dims" in doc:
        dims = doc["dims"]
        if not isinstance(dims, list) or not dims:
            raise PriorConfigError("dims", "must be a non-empty list")
        return PriorSpec(dims=tuple(_parse_dim(e, f"dims[{i}]") for i, e in enumerate(dims)))
    emp = doc["empirical"]
    if not isinstance(emp, dict) or not isinstance(emp.get("path"), str):
        raise PriorConfigError("empirical.path", "expected {'path': <latent dump>}")
    path = Path(emp["path"])
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    try:
        return PriorSpec.from_dump(path)
    except (OSError, ValueError) as exc:
        if isinstance(exc, PriorConfigError):
            raise
        raise PriorConfigError("empirical.path", f"cannot read {path}: {exc}") from exc


def load_prior_config(text: str, base_dir: Path | None = None) -> PriorSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PriorConfigError("prior", f"invalid JSON: {exc}") from exc
    return parse_prior(doc, base_dir)


def prior_to_config(spec: PriorSpec) -> dict:
    if spec.empirical is not None:
        return {"empirical": {"path": str(spec.empirical.path)}}
    dims = []
    for dim in spec.dims:
        if isinstance(dim, Gaussian):
            dims.append({"gaussian": {"mu": dim.mu, "sigma": dim.sigma}})
        elif isinstance(dim, Uniform):
            dims.append({"uniform": {"lo": dim.lo, "hi": dim.hi}})
        else:
            dims.append({"gmm": {"components": [
                {"weight": w, "mu": m, "sigma": s}
                for w, m, s in zip(dim.weights, dim.mus, dim.sigmas)
            ]}})
    return {"dims": dims}


def build_empirical_prior(encode_fn, dataset: np.ndarray, path, batch_size: int = 1024) -> Path:
    """Encode every row of ``dataset`` and write the latents as a dump.

    ``encode_fn`` maps an ``n × features`` array to ``n × d`` latents.
    """
    dataset = np.asarray(dataset)
    if dataset.shape[0] == 0:
        raise ValueError("cannot build an empirical prior from an empty dataset")
    chunks = [np.asarray(encode_fn(dataset[i:i + batch_size]))
              for i in range(0, dataset.shape[0], batch_size)]
    path = Path(path)
    write_latent_dump(path, np.concatenate(chunks, axis=0))
    return path

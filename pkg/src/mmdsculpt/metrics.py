"""Representation metrics: LPS, covariance ratio, NMSE, MIG and report files."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .optim import AdamState, adam_step

COV_RATIO_EPS = 1e-12
COV_RATIO_CAP = 1e12
ZERO_VAR_TOL = 1e-12
HIST_BINS = 64
NEAR_ZERO_STD = 1e-3


# ------------------------------------------------------------------------ LPS

@dataclass(frozen=True)
class RegressorConfig:
    hidden: tuple[int, ...] = (64, 64)
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 200

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class LpsReport:
    r2: list[float]
    lps: float
    config_digest: str
    split_seed: int
    train_r2: list[float] = field(default_factory=list)


class MlpRegressor:
    """Relu MLP for scalar regression, trained with Adam on standardized data."""

    def __init__(self, config: RegressorConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.layers: list[tuple[Tensor, Tensor]] = []

    def _forward(self, x) -> Tensor:
        h = dc.as_tensor(x)
        for i, (W, b) in enumerate(self.layers):
            h = h @ W + b
            if i < len(self.layers) - 1:
                h = dc.relu(h)
        return h

    def fit(self, x: np.ndarray, y: np.ndarray) -> "MlpRegressor":
        cfg = self.config
        self.x_mu, self.x_sd = x.mean(axis=0), x.std(axis=0)
        self.x_sd = np.where(self.x_sd > 0, self.x_sd, 1.0)
        self.y_mu, self.y_sd = float(y.mean()), float(y.std()) or 1.0
        xs = (x - self.x_mu) / self.x_sd
        ys = ((y - self.y_mu) / self.y_sd).reshape(-1, 1)

        widths = [x.shape[1], *cfg.hidden, 1]
        self.layers = []
        for a, b in zip(widths[:-1], widths[1:]):
            bound = math.sqrt(6.0 / a)
            W = Tensor(self.rng.uniform(-bound, bound, size=(a, b)), requires_grad=True)
            self.layers.append((W, Tensor(np.zeros(b), requires_grad=True)))
        tensors = [t for pair in self.layers for t in pair]
        state = AdamState.zeros_like([t.data for t in tensors])
        n = xs.shape[0]
        bs = min(cfg.batch_size, n)
        for _ in range(cfg.epochs):
            order = self.rng.permutation(n)
            for s in range(0, n, bs):
                idx = order[s:s + bs]
                with dc.Tape() as tape:
                    loss = dc.reduce_mean(dc.square(self._forward(xs[idx]) - ys[idx]))
                dc.backward(tape, loss)
                adam_step([t.data for t in tensors], [t.grad for t in tensors], state, cfg.lr)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = self._forward((x - self.x_mu) / self.x_sd).data.reshape(-1)
        return out * self.y_sd + self.y_mu


def r2_score(y: np.ndarray, y_pred: np.ndarray) -> float:
    """Coefficient of determination; 0 by convention for a constant target."""
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot / max(len(y), 1) < ZERO_VAR_TOL:
        return 0.0
    return 1.0 - float(np.sum((y - y_pred) ** 2)) / ss_tot


def lps_mlp(z: np.ndarray, regressor: RegressorConfig | None = None, split: float = 0.8,
            seed: int = 0, epochs: int | None = None) -> LpsReport:
    """Latent Predictability Score with an MLP regressor.

    For each latent dimension, a regressor predicts it from the other
    dimensions; the score is the mean held-out R². Near zero means the
    dimensions carry no information about each other.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError(f"LPS needs an n×d batch with d >= 2, got shape {z.shape}")
    cfg = regressor or RegressorConfig()
    if epochs is not None:
        cfg = RegressorConfig(cfg.hidden, epochs, cfg.lr, cfg.batch_size)
    n, d = z.shape
    n_train = int(round(split * n))
    if not 0 < split < 1 or n_train < 2 or n - n_train < 2:
        raise ValueError(f"n={n} too small for a {split:.2f} train/test split")

    order = np.random.default_rng(seed).permutation(n)
    train, test = z[order[:n_train]], z[order[n_train:]]
    r2, r2_train = [], []
    for i in range(d):
        others = [j for j in range(d) if j != i]
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        model = MlpRegressor(cfg, rng).fit(train[:, others], train[:, i])
        r2.append(r2_score(test[:, i], model.predict(test[:, others])))
        r2_train.append(r2_score(train[:, i], model.predict(train[:, others])))
    return LpsReport(r2, float(np.mean(r2)), cfg.digest(), seed, r2_train)


# --------------------------------------------------------- covariance / NMSE

def covariance_ratio(z: np.ndarray) -> float:
    """Sum of covariance diagonal over sum of absolute off-diagonal entries (capped)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError(f"covariance ratio needs d >= 2, got shape {z.shape}")
    if z.shape[0] < 2:
        raise ValueError("covariance ratio needs n >= 2")
    cov = np.cov(z, rowvar=False)
    off = np.abs(cov).sum() - np.abs(np.diag(cov)).sum()
    return float(min(np.trace(cov) / (off + COV_RATIO_EPS), COV_RATIO_CAP))


def nmse(x: np.ndarray, x_hat: np.ndarray) -> tuple[float, float]:
    """Normalized MSE over the whole set, linear and in dB (``-inf`` for a perfect fit)."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    energy = float(np.sum(x * x))
    if energy <= 0:
        raise ValueError("NMSE undefined for an all-zero reference set")
    lin = float(np.sum((x - x_hat) ** 2)) / energy
    return lin, (10.0 * math.log10(lin) if lin > 0 else -math.inf)


# ------------------------------------------------------------------------ MIG

def equal_frequency_bins(col: np.ndarray, bins: int) -> np.ndarray:
    """Quantile-bin a column; tied values always share a bin."""
    col = np.asarray(col, dtype=np.float64)
    edges = np.quantile(col, np.linspace(0, 1, bins + 1)[1:-1])
    codes = np.searchsorted(edges, col, side="right")
    return np.unique(codes, return_inverse=True)[1]


def entropy(codes: np.ndarray) -> float:
    p = np.bincount(codes) / codes.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in MI (nats) from the joint histogram of two code vectors."""
    nb = int(b.max()) + 1
    joint = np.bincount(a * nb + b, minlength=(int(a.max()) + 1) * nb).reshape(-1, nb) / a.size
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])).sum())


def mig(z: np.ndarray, factors, bins: int = 20) -> float:
    """Mutual Information Gap averaged over factors with non-zero entropy."""
    z = np.asarray(z, dtype=np.float64)
    v = np.asarray(getattr(factors, "values", factors), dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if z.shape[0] != v.shape[0]:
        raise ValueError(f"latent rows ({z.shape[0]}) and factor rows ({v.shape[0]}) differ")
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    zc = [equal_frequency_bins(z[:, j], bins) for j in range(z.shape[1])]
    gaps = []
    for k in range(v.shape[1]):
        vc = equal_frequency_bins(v[:, k], bins)
        h = entropy(vc)
        if h <= 0:
            warnings.warn(f"factor {k} is constant; skipped in MIG", stacklevel=2)
            continue
        mi = sorted((mutual_information(c, vc) for c in zc), reverse=True)
        second = mi[1] if len(mi) > 1 else 0.0
        gaps.append((mi[0] - second) / h)
    if not gaps:
        raise ValueError("every factor is constant; MIG undefined")
    return float(np.mean(gaps))


# -------------------------------------------------------------------- reports

def write_metrics_csv(path, metrics: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for k, v in metrics.items():
            w.writerow([k, repr(float(v))])


def read_metrics_csv(path) -> dict[str, float]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return {k: float(v) for k, v in rows}


def _write_matrix(path, mat: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(mat):
            w.writerow([repr(float(v)) for v in row])


def distribution_report(z: np.ndarray, out_dir, title: str | None = None) -> dict:
    """Write marginal histograms, the covariance matrix and an SVG panel.

    Files: ``hist_dim{i}.csv`` (bin_left, bin_right, count; 64 bins over the
    observed range), ``covariance.csv`` and ``report.svg``. Returns a summary
    with the written paths and dimensions whose std is below 1e-3.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 1:
        raise ValueError(f"report needs an n×d batch with d >= 1, got shape {z.shape}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, d = z.shape
    hists = []
    for i in range(d):
        counts, edges = np.histogram(z[:, i], bins=HIST_BINS)
        hists.append((counts, edges))
        with open(out / f"hist_dim{i}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    cov = np.cov(z, rowvar=False).reshape(d, d) if n >= 2 else np.full((d, d), np.nan)
    _write_matrix(out / "covariance.csv", cov)
    std = z.std(axis=0) if n else np.zeros(d)
    flat = [i for i in range(d) if std[i] < NEAR_ZERO_STD]
    _plot_panel(cov, hists, out / "report.svg", title, flat)
    return {"dir": out, "near_zero_variance_dims": flat}


def _plot_panel(cov, hists, path, title, flat) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    d = len(hists)
    with plt.rc_context({"svg.hashsalt": "mmdsculpt", "svg.fonttype": "none"}):
        fig = plt.figure(figsize=(2.4 * max(d, 2), 5.0))
        grid = fig.add_gridspec(2, max(d, 2))
        ax = fig.add_subplot(grid[0, :])
        lim = np.nanmax(np.abs(cov)) if np.isfinite(cov).any() else 1.0
        im = ax.imshow(np.nan_to_num(cov), cmap="coolwarm", vmin=-lim, vmax=lim)
        ax.set_title("latent covariance")
        fig.colorbar(im, ax=ax, fraction=0.046)
        for i, (counts, edges) in enumerate(hists):
            hax = fig.add_subplot(grid[1, i])
            hax.stairs(counts, edges, fill=True)
            hax.set_title(f"z{i}" + (" (flat)" if i in flat else ""), fontsize=8)
            hax.tick_params(labelsize=6)
        heading = title or ""
        if flat:
            heading = (heading + "  " if heading else "") + f"near-zero variance: dims {flat}"
        if heading:
            fig.suptitle(heading, fontsize=9)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

"""Gaussian RBF kernel mixtures with a median-heuristic base bandwidth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .diffcore import DimensionError, Tensor, as_tensor, exp, mul, pairwise_sq_dists, reduce_sum

DEFAULT_MULTIPLIERS = (0.5, 1.0, 2.0)
MEDIAN_FALLBACK = 1.0


@dataclass(frozen=True)
class KernelSpec:
    """RBF mixture: ``sigma = c * sigma_base`` for each multiplier ``c``.

    ``sigma_base=None`` selects the median heuristic, resolved per call on the
    union of both sample sets.
    """

    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    sigma_base: float | None = None

    def __post_init__(self):
        mults = tuple(float(c) for c in self.multipliers)
        if not mults:
            raise ValueError("kernel multipliers must be non-empty")
        if any(not np.isfinite(c) or c <= 0 for c in mults):
            raise ValueError(f"kernel multipliers must be positive, got {mults}")
        object.__setattr__(self, "multipliers", mults)
        if self.sigma_base is not None and not self.sigma_base > 0:
            raise ValueError(f"fixed sigma_base must be positive, got {self.sigma_base}")

    @property
    def uses_median(self) -> bool:
        return self.sigma_base is None

    @classmethod
    def fixed(cls, sigma_base: float, multipliers=DEFAULT_MULTIPLIERS) -> "KernelSpec":
        return cls(multipliers=tuple(multipliers), sigma_base=float(sigma_base))

    def resolve_bandwidth(self, z, z_prime) -> float:
        if self.sigma_base is not None:
            return float(self.sigma_base)
        return median_heuristic_bandwidth(z, z_prime)


def _values(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def median_heuristic_bandwidth(z, z_prime) -> float:
    """Median Euclidean distance over all unordered pairs of ``z ∪ z_prime``.

    Returns 1.0 when the median is zero (e.g. all points identical).
    """
    a, b = _values(z), _values(z_prime)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"latent batches must be n×d with equal d, got {a.shape} and {b.shape}")
    pts = np.concatenate([a, b], axis=0)
    n = pts.shape[0]
    if n < 2:
        raise ValueError(f"median heuristic needs at least 2 points, got {n}")
    med = float(np.median(pdist(pts)))
    return med if med > 0 else MEDIAN_FALLBACK


def kernel_matrix(a, b, spec: KernelSpec, sigma_base: float) -> Tensor:
    """Sum over multipliers of ``exp(-|a_i - b_j|^2 / (2 (c sigma_base)^2))``."""
    if not sigma_base > 0:
        raise ValueError(f"sigma_base must be positive, got {sigma_base}")
    same = a is b
    a = as_tensor(a)
    b = a if same else as_tensor(b)
    d2 = pairwise_sq_dists(a, b)
    out = None
    for c in spec.multipliers:
        k = exp(mul(d2, -1.0 / (2.0 * (c * sigma_base) ** 2)))
        out = k if out is None else out + k
    return out


def kernel_sum(a, b, spec: KernelSpec, sigma_base: float) -> Tensor:
    return reduce_sum(kernel_matrix(a, b, spec, sigma_base))

"""Quadratic-time MMD² estimators and the differentiable MMD penalty."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

from .diffcore import DimensionError, Tensor, as_tensor
from .kernels import KernelSpec, kernel_sum

BIASED = "biased"
UNBIASED = "unbiased"
ESTIMATORS = (BIASED, UNBIASED)


class EstimatorUndefinedError(ValueError):
    """Too few samples for the requested estimator."""


@dataclass(frozen=True)
class MmdEstimate:
    value: float
    estimator: str
    sigma_base: float
    m: int
    n: int


def _check_batches(z: Tensor, zp: Tensor) -> None:
    if z.ndim != 2 or zp.ndim != 2:
        raise DimensionError(f"latent batches must be 2-D, got {z.shape} and {zp.shape}")
    if z.shape[1] != zp.shape[1]:
        raise DimensionError(f"latent dimension mismatch: {z.shape} vs {zp.shape}")


def _mmd2(z: Tensor, zp: Tensor, spec: KernelSpec, estimator: str) -> tuple[Tensor, float]:
    _check_batches(z, zp)
    m, n = z.shape[0], zp.shape[0]
    if estimator == UNBIASED:
        if m < 2 or n < 2:
            raise EstimatorUndefinedError(f"unbiased MMD² needs m, n >= 2 (got m={m}, n={n})")
    elif estimator == BIASED:
        if m < 1 or n < 1:
            raise EstimatorUndefinedError(f"biased MMD² needs non-empty batches (got m={m}, n={n})")
    else:
        raise ValueError(f"unknown estimator {estimator!r}")

    sigma = spec.resolve_bandwidth(z, zp)
    kxx = kernel_sum(z, z, spec, sigma)
    kyy = kernel_sum(zp, zp, spec, sigma)
    kxy = kernel_sum(z, zp, spec, sigma)
    if estimator == BIASED:
        value = kxx * (1.0 / (m * m)) + kyy * (1.0 / (n * n)) - kxy * (2.0 / (m * n))
    else:
        # diagonal of k(z, z) is exactly len(multipliers)
        diag = float(len(spec.multipliers))
        value = ((kxx - diag * m) * (1.0 / (m * (m - 1)))
                 + (kyy - diag * n) * (1.0 / (n * (n - 1)))
                 - kxy * (2.0 / (m * n)))
    return value, sigma


def _estimate(z, z_prime, spec: KernelSpec, estimator: str) -> MmdEstimate:
    z = Tensor(z.data if isinstance(z, Tensor) else z)
    zp = Tensor(z_prime.data if isinstance(z_prime, Tensor) else z_prime)
    value, sigma = _mmd2(z, zp, spec, estimator)
    v = value.item()
    if estimator == BIASED:
        v = max(v, 0.0)
    return MmdEstimate(v, estimator, sigma, z.shape[0], zp.shape[0])


def mmd2_unbiased(z, z_prime, spec: KernelSpec | None = None) -> MmdEstimate:
    """U-statistic estimate of MMD²; may be negative."""
    return _estimate(z, z_prime, spec or KernelSpec(), UNBIASED)


def mmd2_biased(z, z_prime, spec: KernelSpec | None = None) -> MmdEstimate:
    """V-statistic estimate of MMD² (self-pairs included, clamped at 0)."""
    return _estimate(z, z_prime, spec or KernelSpec(), BIASED)


def mmd_loss(z: Tensor, prior_samples, spec: KernelSpec | None = None,
             estimator: str = BIASED) -> Tensor:
    """MMD² between encoded latents ``z`` and prior draws, as a graph node.

    Prior samples are treated as constants. The bandwidth is resolved from
    the current values and carries no gradient.
    """
    spec = spec or KernelSpec()
    zp = Tensor(prior_samples.data if isinstance(prior_samples, Tensor) else prior_samples)
    z = as_tensor(z)
    _check_batches(z, zp)
    if z.shape[0] != zp.shape[0]:
        warnings.warn(
            f"prior batch size {zp.shape[0]} differs from encoded batch size {z.shape[0]}",
            stacklevel=2,
        )
    value, _ = _mmd2(z, zp, spec, estimator)
    return value

"""Sculpt autoencoder latent spaces toward programmable priors with MMD."""
from .diffcore import Tape, Tensor, backward
from .kernels import KernelSpec, kernel_matrix, median_heuristic_bandwidth
from .metrics import covariance_ratio, lps_mlp, mig, nmse
from .mmd import MmdEstimate, mmd2_biased, mmd2_unbiased, mmd_loss
from .priors import PriorSpec, load_prior_config, sample_prior

__version__ = "0.1.0"

__all__ = [
    "KernelSpec",
    "MmdEstimate",
    "PriorSpec",
    "Tape",
    "Tensor",
    "backward",
    "covariance_ratio",
    "kernel_matrix",
    "load_prior_config",
    "lps_mlp",
    "median_heuristic_bandwidth",
    "mig",
    "mmd2_biased",
    "mmd2_unbiased",
    "mmd_loss",
    "nmse",
    "sample_prior",
]

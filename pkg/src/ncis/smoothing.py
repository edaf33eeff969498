"""Gaussian kernel construction and (iterative) Gaussian smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .numerics import kernels as nk


@dataclass(frozen=True)
class GaussianKernel:
    size: int
    sigma: float
    weights: np.ndarray  # (K,K) float64, nonnegative, sums to 1


def gaussian_kernel(K: int) -> GaussianKernel:
    """Normalized isotropic Gaussian taps with sigma = (K-1)/6; K=1 is identity."""
    if K < 1 or K % 2 == 0:
        raise InvalidArgumentError(f"kernel size must be odd and positive, got {K}")
    if K == 1:
        return GaussianKernel(1, 0.0, np.ones((1, 1)))
    sigma = (K - 1) / 6.0
    half = (K - 1) // 2
    u = np.arange(-half, half + 1, dtype=np.float64)
    sq = u[:, None] ** 2 + u[None, :] ** 2
    w = np.exp(-sq / (2.0 * sigma * sigma))
    return GaussianKernel(K, sigma, w / w.sum())


def gs(x: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Per-channel smoothing with reflect padding; no clamping here (that
    happens at purifier boundaries, keeping the raw map linear)."""
    x = np.asarray(x)
    if kernel.size == 1:
        return np.array(x, copy=True)
    xb, squeezed = nk.as_batched(x)
    k = kernel.size
    pad = (k - 1) // 2
    h, w_dim = xb.shape[2], xb.shape[3]
    xp = nk.pad2d(xb, pad, "reflect")
    taps = kernel.weights.astype(x.dtype)
    out = np.zeros_like(xb)
    for u in range(k):
        for v in range(k):
            out += taps[u, v] * xp[:, :, u : u + h, v : v + w_dim]
    return out[0] if squeezed else out


def iterate(purifier, x: np.ndarray, i: int) -> np.ndarray:
    """i-fold composition of a one-step purifier; i = 0 is the identity."""
    if i < 0:
        raise InvalidArgumentError(f"iteration count must be >= 0, got {i}")
    out = x
    for _ in range(i):
        out = purifier(out)
    return out

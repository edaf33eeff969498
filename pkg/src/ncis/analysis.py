"""Empirical noise statistics and verification curves.

Patch means and pooled skewness quantify whether attack residuals look like
zero-mean symmetric noise (which is what makes averaging kernels wash them
out); the MSE curves and the purification success rate track what iterated
smoothing does to attacked/clean pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierModel, predict
from .errors import DegenerateVarianceError, InvalidArgumentError, ShapeMismatchError

_VARIANCE_FLOOR = 1e-24


@dataclass
class PatchStats:
    patch_size: int
    sample_count: int
    patch_means: np.ndarray
    pooled_skewness: float  # nan when the pooled variance is degenerate
    degenerate_patches: int
    hist_edges: np.ndarray  # 102 edges -> 101 uniform bins over [-eps, eps]
    hist_counts: np.ndarray


def sample_patches(noise: np.ndarray, K: int, count: int, seed: int) -> np.ndarray:
    """Uniformly random K x K crops, stacked as (count, C, K, K)."""
    noise = np.asarray(noise)
    c, h, w = noise.shape
    if K > min(h, w):
        raise InvalidArgumentError(f"patch size {K} exceeds image dims {h}x{w}")
    if count == 0:
        return np.empty((0, c, K, K), dtype=noise.dtype)
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, h - K + 1, size=count)
    cols = rng.integers(0, w - K + 1, size=count)
    return np.stack([noise[:, r : r + K, c0 : c0 + K] for r, c0 in zip(rows, cols)])


def skewness(values) -> float:
    """Fisher-Pearson g1 = m3 / m2^(3/2) from central moments."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 3:
        raise InvalidArgumentError(f"need at least 3 values, got {v.size}")
    d = v - v.mean()
    m2 = float((d * d).mean())
    if m2 <= _VARIANCE_FLOOR:
        raise DegenerateVarianceError("skewness undefined for (near) constant sample")
    m3 = float((d * d * d).mean())
    return m3 / m2**1.5


def noise_statistics(
    noises: list[np.ndarray],
    K_list=(5, 7, 9, 11),
    patches_per_image: int = 100,
    seed: int = 0,
    eps: float | None = None,
) -> dict[int, PatchStats]:
    """Per-patch means and pooled skewness for each K.

    The pooled skewness is computed over every pixel of every sampled patch
    together. Patches with zero variance are counted, and the pooled value
    degenerates to nan when the whole pool is constant. Histogram bins span
    [-eps, eps]; eps defaults to the largest residual magnitude observed.
    """
    if not noises:
        raise InvalidArgumentError("need at least one noise image")
    if eps is None:
        eps = max(float(np.abs(n).max()) for n in noises)
        if eps == 0.0:
            eps = 1.0
    out: dict[int, PatchStats] = {}
    for k_idx, K in enumerate(K_list):
        means = []
        degenerate = 0
        pooled = []
        for img_idx, noise in enumerate(noises):
            patches = sample_patches(noise, K, patches_per_image, seed + 1000003 * k_idx + img_idx)
            flat = patches.reshape(len(patches), -1)
            means.append(flat.mean(axis=1))
            degenerate += int((flat.var(axis=1) <= _VARIANCE_FLOOR).sum())
            pooled.append(flat)
        patch_means = np.concatenate(means) if means else np.empty(0)
        pool = np.concatenate(pooled).ravel().astype(np.float64)
        try:
            g1 = skewness(pool)
        except (DegenerateVarianceError, InvalidArgumentError):
            g1 = float("nan")
        edges = np.linspace(-eps, eps, 102)
        counts, _ = np.histogram(patch_means, bins=edges)
        out[K] = PatchStats(
            patch_size=K,
            sample_count=len(patch_means),
            patch_means=patch_means,
            pooled_skewness=g1,
            degenerate_patches=degenerate,
            hist_edges=edges,
            hist_counts=counts,
        )
    return out


def write_noise_stats_csv(stats: dict[int, PatchStats], path) -> None:
    with open(path, "w", newline="") as f:
        f.write("K,samples,mean_of_patch_means,std_of_patch_means,pooled_skewness,degenerate_patches\n")
        for K in sorted(stats):
            s = stats[K]
            f.write(
                f"{K},{s.sample_count},{s.patch_means.mean():.6f},{s.patch_means.std():.6f},"
                f"{s.pooled_skewness:.6f},{s.degenerate_patches}\n"
            )


def mse_curve(purifier, pairs: list[tuple[np.ndarray, np.ndarray]], i_max: int) -> list[tuple[int, float, float]]:
    """Rows (i, mse(x, T^i(x)), mse(x, T^i(x'))) for i = 0..i_max, averaged
    over the pair list."""
    if i_max < 1:
        raise InvalidArgumentError("i_max must be >= 1")
    if not pairs:
        raise InvalidArgumentError("need at least one (clean, attacked) pair")
    clean = np.stack([p[0] for p in pairs]).astype(np.float32)
    adv = np.stack([p[1] for p in pairs]).astype(np.float32)
    zc, za = clean, adv
    rows = []
    for i in range(i_max + 1):
        if i > 0:
            zc = purifier.apply_once(zc)
            za = purifier.apply_once(za)
        rows.append((i, float(((zc - clean) ** 2).mean()), float(((za - clean) ** 2).mean())))
    return rows


def write_curve_csv(rows: list[tuple[int, float, float]], path) -> None:
    with open(path, "w", newline="") as f:
        f.write("i,mse_clean,mse_attacked\n")
        for i, a, b in rows:
            f.write(f"{i},{a:.6f},{b:.6f}\n")


def psr(model: ClassifierModel, purifier, inputs: list[np.ndarray], references: list[np.ndarray]) -> float:
    """Fraction of inputs whose purified prediction matches the prediction on
    the corresponding clean reference."""
    if len(inputs) != len(references):
        raise ShapeMismatchError(f"{len(inputs)} inputs vs {len(references)} references")
    if not inputs:
        raise InvalidArgumentError("empty input list")
    purified = purifier(np.stack(inputs))
    ref_pred = predict(model, np.stack(references)).argmax(axis=1)
    out_pred = predict(model, purified).argmax(axis=1)
    return float((out_pred == ref_pred).mean())

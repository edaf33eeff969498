"""Adversarial example generation: PGD (L-inf / L2, targeted or not), FGSM,
and purifier-aware PGD with a straight-through (identity) backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .classifier import ClassifierModel, logits_graph
from .errors import InvalidArgumentError, ShapeMismatchError, TrainingDivergedError

NORMS = ("linf", "l2")


@dataclass
class AttackConfig:
    norm: str = "linf"
    eps: float = 16 / 255
    alpha: float = 1.6 / 255
    iterations: int = 10
    targeted: bool = False
    target_class: int | None = None
    random_start: bool = False
    seed: int = 0

    def validate(self):
        if self.norm not in NORMS:
            raise InvalidArgumentError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.eps < 0:
            raise InvalidArgumentError("eps must be >= 0")
        if self.iterations > 0 and self.alpha <= 0:
            raise InvalidArgumentError("alpha must be > 0 when iterating")
        if self.targeted and self.target_class is None:
            raise InvalidArgumentError("targeted attack needs a target_class")


@dataclass
class NoiseResidual:
    data: np.ndarray  # x' - x, same shape as x


def residual(x_adv: np.ndarray, x: np.ndarray) -> NoiseResidual:
    if x_adv.shape != x.shape:
        raise ShapeMismatchError(f"residual: {x_adv.shape} vs {x.shape}")
    return NoiseResidual(x_adv - x)


def _flat_norms(d: np.ndarray) -> np.ndarray:
    return np.sqrt((d.reshape(d.shape[0], -1) ** 2).sum(axis=1))


def _project(cur: np.ndarray, x0: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.norm == "linf":
        cur = np.clip(cur, x0 - cfg.eps, x0 + cfg.eps)
    else:
        delta = cur - x0
        norms = _flat_norms(delta)
        over = norms > cfg.eps
        if np.any(over):
            factor = np.ones_like(norms)
            factor[over] = cfg.eps / norms[over]
            delta = delta * factor[:, None, None, None]
        cur = x0 + delta
    return np.clip(cur, 0.0, 1.0).astype(np.float32)


def _loss_gradient(model: ClassifierModel, at: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the summed cross-entropy at ``at`` w.r.t. the input batch.

    Sum (not mean) reduction keeps every image's gradient identical to its
    single-image run, so batching does not change the attack.
    """
    xt = nm.Tensor(at, requires_grad=True)
    logits = logits_graph(model, xt, params_grad=False)
    loss = nm.softmax_cross_entropy(logits, labels, reduction="sum")
    loss.backward()
    g = xt.grad
    if not np.all(np.isfinite(g)):
        raise TrainingDivergedError("non-finite attack gradient")
    return g


def _pgd_core(model, x, y, cfg, purifier=None) -> np.ndarray:
    cfg.validate()
    x = np.asarray(x, dtype=np.float32)
    single = x.ndim == 3
    x0 = x[None] if single else x
    labels = np.full(x0.shape[0], cfg.target_class) if cfg.targeted else np.atleast_1d(y)
    sign = -1.0 if cfg.targeted else 1.0

    cur = x0.copy()
    if cfg.random_start and cfg.eps > 0:
        rng = np.random.default_rng(cfg.seed)
        if cfg.norm == "linf":
            cur = cur + rng.uniform(-cfg.eps, cfg.eps, size=cur.shape).astype(np.float32)
        else:
            d = rng.standard_normal(cur.shape).astype(np.float32)
            norms = np.maximum(_flat_norms(d), 1e-12)
            radii = cfg.eps * rng.uniform(0, 1, size=len(d)) ** (1.0 / d[0].size)
            cur = cur + d * (radii / norms)[:, None, None, None]
        cur = _project(cur, x0, cfg)

    for _ in range(cfg.iterations):
        at = purifier(cur) if purifier is not None else cur
        g = _loss_gradient(model, at.astype(np.float32), labels)
        if cfg.norm == "linf":
            step = cfg.alpha * np.sign(g)
        else:
            norms = _flat_norms(g)
            scale = np.where(norms > 0, cfg.alpha / np.maximum(norms, 1e-30), 0.0)
            step = g * scale[:, None, None, None].astype(np.float32)
        cur = _project(cur + sign * step.astype(np.float32), x0, cfg)

    return cur[0] if single else cur


def pgd(model: ClassifierModel, x: np.ndarray, y, cfg: AttackConfig) -> np.ndarray:
    """Projected gradient ascent on the classification loss (descent on the
    target-class loss when targeted), clamped to the eps-ball and [0,1]."""
    return _pgd_core(model, x, y, cfg)


def fgsm(model: ClassifierModel, x: np.ndarray, y, eps: float) -> np.ndarray:
    """Single signed-gradient step of size eps."""
    cfg = AttackConfig(norm="linf", eps=eps, alpha=eps if eps > 0 else 1.0, iterations=1)
    return _pgd_core(model, x, y, cfg)


def bpda_pgd(model: ClassifierModel, purifier, x: np.ndarray, y, cfg: AttackConfig) -> np.ndarray:
    """Purifier-aware PGD: each step evaluates the loss gradient at the
    purified point and applies it straight through to the raw iterate."""
    return _pgd_core(model, x, y, cfg, purifier=purifier)


def transfer_attack(
    substitute_model: ClassifierModel,
    target_model: ClassifierModel,
    dataset,
    cfg: AttackConfig,
    purifier=None,
):
    """Craft against the substitute, evaluate the target; returns an EvalReport."""
    from .dataio import stack_images
    from .harness import evaluate

    images, labels = stack_images(dataset)
    adv = pgd(substitute_model, images, labels, cfg)
    return evaluate(target_model, purifier, dataset, cfg, adv_images=adv)

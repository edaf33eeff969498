"""Target model: a small trainable CNN with logits and input gradients.

Two 3x3 conv layers (16 and 32 channels), each with relu and 2x2 average
pooling, then one linear layer to the class logits. Average pooling keeps
the attack gradients smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .dataio import LabeledImage, load_checkpoint, save_checkpoint, stack_images
from .errors import InvalidArgumentError, ShapeMismatchError, TrainingDivergedError


@dataclass
class ClassifierModel:
    params: dict[str, nm.Tensor]
    n_classes: int
    channels: int
    size: int
    meta: dict = field(default_factory=dict)


def init_classifier(n_classes=10, channels=1, size=32, seed=0) -> ClassifierModel:
    if size % 4:
        raise InvalidArgumentError("input size must be divisible by 4 (two 2x2 pools)")
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)

    feat = 32 * (size // 4) * (size // 4)
    params = {
        "conv1_w": nm.parameter(he((16, channels, 3, 3), channels * 9)),
        "conv1_b": nm.parameter(np.zeros(16, dtype=np.float32)),
        "conv2_w": nm.parameter(he((32, 16, 3, 3), 16 * 9)),
        "conv2_b": nm.parameter(np.zeros(32, dtype=np.float32)),
        "fc_w": nm.parameter((rng.standard_normal((n_classes, feat)) / np.sqrt(feat)).astype(np.float32)),
        "fc_b": nm.parameter(np.zeros(n_classes, dtype=np.float32)),
    }
    return ClassifierModel(params, n_classes, channels, size, {"seed": seed, "epochs": 0})


def logits_graph(model: ClassifierModel, x: nm.Tensor, params_grad: bool = True) -> nm.Tensor:
    """Forward pass as a differentiable graph over (N,C,H,W) or (C,H,W)."""
    p = model.params if params_grad else {k: nm.constant(v.data) for k, v in model.params.items()}
    h = nm.relu(nm.conv2d(x, p["conv1_w"], p["conv1_b"]))
    h = nm.avgpool2(h)
    h = nm.relu(nm.conv2d(h, p["conv2_w"], p["conv2_b"]))
    h = nm.avgpool2(h)
    return nm.linear(nm.flatten_samples(h), p["fc_w"], p["fc_b"])


def predict(model: ClassifierModel, images: np.ndarray) -> np.ndarray:
    """Logits for one (C,H,W) image or a (N,C,H,W) batch."""
    images = np.asarray(images)
    expect = (model.channels, model.size, model.size)
    if images.shape[-3:] != expect:
        raise ShapeMismatchError(f"expected trailing dims {expect}, got {images.shape}")
    with nm.no_grad():
        return logits_graph(model, nm.Tensor(images), params_grad=False).data


def top_k(logits: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest logits, descending; ties go to the lower index."""
    logits = np.asarray(logits)
    if not 1 <= k <= logits.shape[-1]:
        raise InvalidArgumentError(f"k must be in [1, {logits.shape[-1]}], got {k}")
    return list(np.argsort(-logits, kind="stable")[:k])


def accuracy(model: ClassifierModel, dataset: list[LabeledImage], purifier=None) -> float:
    """Fraction of argmax-correct predictions, after optional purification."""
    images, labels = stack_images(dataset)
    if purifier is not None:
        images = purifier(images)
    preds = predict(model, images).argmax(axis=1)
    return float((preds == labels).mean())


def train_classifier(
    train: list[LabeledImage],
    epochs: int = 32,
    lr: float = 2e-3,
    batch: int = 64,
    seed: int = 0,
) -> ClassifierModel:
    """Adam + cross-entropy training; deterministic for a given seed/config."""
    images, labels = stack_images(train)
    n_classes = int(labels.max()) + 1
    model = init_classifier(n_classes, images.shape[1], images.shape[2], seed=seed)
    opt = nm.Adam(model.params, lr=lr)
    rng = np.random.default_rng(seed + 1)
    for _ in range(epochs):
        order = rng.permutation(len(images))
        for start in range(0, len(images), batch):
            idx = order[start : start + batch]
            logits = logits_graph(model, nm.Tensor(images[idx]))
            loss = nm.softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(f"non-finite training loss {loss.data}")
            opt.zero_grad()
            loss.backward()
            opt.step()
    preds = predict(model, images).argmax(axis=1)
    model.meta = {
        "seed": seed,
        "epochs": epochs,
        "lr": lr,
        "batch": batch,
        "train_accuracy": float((preds == labels).mean()),
    }
    return model


def save_classifier(model: ClassifierModel, path) -> None:
    save_checkpoint(path, {k: t.data for k, t in model.params.items()})


def load_classifier(path) -> ClassifierModel:
    """Rebuild a model from a checkpoint; the architecture is implied by shapes."""
    raw = load_checkpoint(path)
    needed = {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b"}
    if set(raw) != needed:
        raise InvalidArgumentError(f"checkpoint keys {sorted(raw)} do not match a classifier")
    channels = raw["conv1_w"].shape[1]
    n_classes, feat = raw["fc_w"].shape
    size = 4 * int(round(np.sqrt(feat / 32)))
    if 32 * (size // 4) ** 2 != feat:
        raise InvalidArgumentError(f"cannot infer input size from fc width {feat}")
    params = {k: nm.parameter(v.astype(np.float32)) for k, v in raw.items()}
    return ClassifierModel(params, n_classes, channels, size, {"loaded": True})

"""Blind-spot purifiers: pixel-level BSN, its patch extension, and the
combination with Gaussian smoothing, plus self-supervised training,
iteration selection and noise-randomized (dynamic) inference.

The network is one centrally-masked k_b x k_b convolution followed by 1x1
residual layers, so the output at a pixel provably never sees that pixel:
stacking masked convolutions would leak the center through composition,
while 1x1 layers cannot widen the receptive field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .classifier import ClassifierModel, predict
from .dataio import LabeledImage, load_checkpoint, save_checkpoint, stack_images
from .errors import InvalidArgumentError, ShapeMismatchError, TrainingDivergedError
from .numerics import kernels as nk
from .smoothing import GaussianKernel, gaussian_kernel, gs, iterate

KINDS = ("gs", "fbi", "fbie", "ncis", "identity")
TRAINABLE_KINDS = ("fbi", "fbie", "ncis")


# ---------------------------------------------------------------------------
# extension operations
# ---------------------------------------------------------------------------


def patch_to_channel(x: np.ndarray, m: int) -> np.ndarray:
    """Move each aligned m x m patch into channels: (C,H,W) -> (C*m*m,H/m,W/m).
    Output channel c*m*m + dy*m + dx at (i,j) is input channel c at
    (i*m+dy, j*m+dx)."""
    xb, squeezed = nk.as_batched(np.asarray(x))
    out = nk.space_to_depth(xb, m)
    return out[0] if squeezed else out


def channel_to_patch(x: np.ndarray, m: int) -> np.ndarray:
    """Exact inverse of :func:`patch_to_channel`."""
    xb, squeezed = nk.as_batched(np.asarray(x))
    out = nk.depth_to_space(xb, m)
    return out[0] if squeezed else out


# ---------------------------------------------------------------------------
# blind-spot network
# ---------------------------------------------------------------------------


@dataclass
class BsnNetwork:
    params: dict[str, nm.Tensor]
    in_channels: int
    hidden: int = 64
    k_b: int = 5
    layers: int = 8
    meta: dict = field(default_factory=dict)


def init_bsn(in_channels: int, hidden: int = 64, k_b: int = 5, layers: int = 8, seed: int = 0) -> BsnNetwork:
    if k_b % 2 == 0 or k_b < 3:
        raise InvalidArgumentError(f"receptive window must be odd and >= 3, got {k_b}")
    if layers < 3:
        raise InvalidArgumentError("need at least first, one middle and final layer")
    rng = np.random.default_rng(seed)

    def gauss(shape, std):
        return (rng.standard_normal(shape) * std).astype(np.float32)

    params: dict[str, nm.Tensor] = {}
    w1 = gauss((hidden, in_channels, k_b, k_b), np.sqrt(2.0 / (in_channels * k_b * k_b)))
    w1[:, :, k_b // 2, k_b // 2] = 0.0  # masked tap never participates
    params["conv1_w"] = nm.parameter(w1)
    params["conv1_b"] = nm.parameter(np.zeros(hidden, dtype=np.float32))
    for j in range(1, layers - 1):
        params[f"block{j}_w"] = nm.parameter(gauss((hidden, hidden, 1, 1), 0.5 * np.sqrt(2.0 / hidden)))
        params[f"block{j}_b"] = nm.parameter(np.zeros(hidden, dtype=np.float32))
    params["final_w"] = nm.parameter(gauss((in_channels, hidden, 1, 1), 0.5 / np.sqrt(hidden)))
    params["final_b"] = nm.parameter(np.zeros(in_channels, dtype=np.float32))
    return BsnNetwork(params, in_channels, hidden, k_b, layers, {"seed": seed})


def bsn_graph(net: BsnNetwork, x: nm.Tensor) -> nm.Tensor:
    """Differentiable forward pass; also the inference path under no_grad."""
    p = net.params
    h = nm.conv2d(x, p["conv1_w"], p["conv1_b"], padding="zero", center_mask=True)
    for j in range(1, net.layers - 1):
        h = nm.add(h, nm.conv2d(nm.relu(h), p[f"block{j}_w"], p[f"block{j}_b"]))
    return nm.conv2d(nm.relu(h), p["final_w"], p["final_b"])


def bsn_forward(net: BsnNetwork, x: np.ndarray) -> np.ndarray:
    """Reconstruct each pixel from its masked k_b x k_b context."""
    x = np.asarray(x)
    if x.shape[-3] != net.in_channels:
        raise ShapeMismatchError(f"network expects {net.in_channels} channels, got {x.shape}")
    with nm.no_grad():
        return bsn_graph(net, nm.Tensor(x)).data


def fbie_graph(net: BsnNetwork, x: nm.Tensor, m: int) -> nm.Tensor:
    if m == 1:
        return bsn_graph(net, x)
    return nm.depth_to_space(bsn_graph(net, nm.space_to_depth(x, m)), m)


def fbie_forward(net: BsnNetwork, x: np.ndarray, m: int) -> np.ndarray:
    """Patch-extended BSN: the blind spot becomes a whole aligned m x m patch."""
    with nm.no_grad():
        return fbie_graph(net, nm.Tensor(np.asarray(x)), m).data


def ncis_forward(net: BsnNetwork, x: np.ndarray, m: int, K: int, clamp: bool = True) -> np.ndarray:
    """Blind-spot reconstruction plus the smoothed input; clamped by default."""
    out = fbie_forward(net, x, m) + gs(np.asarray(x), gaussian_kernel(K))
    return nk.clamp01(out) if clamp else out


def save_bsn(net: BsnNetwork, path) -> None:
    save_checkpoint(path, {k: t.data for k, t in net.params.items()})


def load_bsn(path) -> BsnNetwork:
    raw = load_checkpoint(path)
    if "conv1_w" not in raw or "final_w" not in raw:
        raise InvalidArgumentError("checkpoint does not contain a blind-spot network")
    hidden, in_channels, k_b, _ = raw["conv1_w"].shape
    blocks = sum(1 for k in raw if k.endswith("_w") and k.startswith("block"))
    params = {k: nm.parameter(v.astype(np.float32)) for k, v in raw.items()}
    return BsnNetwork(params, in_channels, hidden, k_b, blocks + 2, {"loaded": True})


# ---------------------------------------------------------------------------
# purifier wrapper
# ---------------------------------------------------------------------------


@dataclass
class PurifierConfig:
    kind: str = "gs"
    K: int = 5
    m: int = 1
    i: int = 1
    checkpoint: str | None = None

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.i < 0:
            raise InvalidArgumentError("iteration count must be >= 0")
        if self.kind in ("gs", "ncis") and (self.K < 1 or self.K % 2 == 0):
            raise InvalidArgumentError(f"K must be odd and positive, got {self.K}")
        if self.kind in ("fbie", "ncis") and self.m < 1:
            raise InvalidArgumentError("extension factor m must be >= 1")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PurifierConfig":
        cfg = cls(**json.loads(text))
        cfg.validate()
        return cfg


class Purifier:
    """One-step purifier map plus its iteration count.

    ``apply_once`` clamps to [0,1] (the classifier's domain) after every full
    application; ``__call__`` composes it ``iterations`` times.
    """

    def __init__(self, kind: str, net: BsnNetwork | None = None, m: int = 1, K: int = 5, iterations: int = 1):
        if kind not in KINDS:
            raise InvalidArgumentError(f"kind must be one of {KINDS}, got {kind!r}")
        if kind in TRAINABLE_KINDS and net is None:
            raise InvalidArgumentError(f"{kind} purifier needs a trained network")
        self.kind = kind
        self.net = net
        self.m = m
        self.K = K
        self.iterations = iterations
        self._kernel = gaussian_kernel(K) if kind in ("gs", "ncis") else None

    def apply_once(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.asarray(x)
        if self.kind == "gs":
            return nk.clamp01(gs(x, self._kernel))
        if self.kind == "fbi":
            return nk.clamp01(bsn_forward(self.net, x))
        if self.kind == "fbie":
            return nk.clamp01(fbie_forward(self.net, x, self.m))
        return nk.clamp01(fbie_forward(self.net, x, self.m) + gs(np.asarray(x), self._kernel))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return iterate(self.apply_once, x, self.iterations)

    def with_iterations(self, i: int) -> "Purifier":
        return Purifier(self.kind, self.net, self.m, self.K, i)


def build_purifier(config: PurifierConfig, net: BsnNetwork | None = None) -> Purifier:
    config.validate()
    if net is None and config.checkpoint:
        net = load_bsn(config.checkpoint)
    return Purifier(config.kind, net, config.m, config.K, config.i)


def identity_purifier() -> Purifier:
    return Purifier("identity", iterations=1)


# ---------------------------------------------------------------------------
# self-supervised training
# ---------------------------------------------------------------------------


@dataclass
class PurifierTrainConfig:
    kind: str = "ncis"
    m: int = 2
    K: int = 11
    epochs: int = 30
    lr: float = 1e-3
    batch: int = 32  # 0 means full-batch
    seed: int = 0
    hidden: int = 64
    k_b: int = 5
    layers: int = 8


def _reconstruction_target(images: np.ndarray, cfg: PurifierTrainConfig) -> np.ndarray:
    if cfg.kind == "ncis":
        return images - gs(images, gaussian_kernel(cfg.K))
    return images


def purifier_loss(net: BsnNetwork, images: np.ndarray, cfg: PurifierTrainConfig) -> float:
    """Current reconstruction MSE of the configured forward map."""
    m = cfg.m if cfg.kind in ("fbie", "ncis") else 1
    target = _reconstruction_target(images, cfg)
    recon = fbie_forward(net, images, m)
    return float(((recon - target) ** 2).mean())


def train_purifier(images, config: PurifierTrainConfig) -> BsnNetwork:
    """Minimize the self-supervised reconstruction loss on clean images.

    Labels and adversarial examples are never seen. The blind branch for
    ``ncis`` is fitted to the residual between the image and its smoothed
    version, which is what the additive decomposition trains implicitly.
    """
    if config.kind not in TRAINABLE_KINDS:
        raise InvalidArgumentError(f"kind must be one of {TRAINABLE_KINDS}, got {config.kind!r}")
    if isinstance(images, list):
        images = stack_images(images)[0] if isinstance(images[0], LabeledImage) else np.stack(images)
    images = np.asarray(images, dtype=np.float32)
    m = config.m if config.kind in ("fbie", "ncis") else 1
    if images.shape[2] % m or images.shape[3] % m:
        raise ShapeMismatchError(f"image dims {images.shape[2:]} not divisible by m={m}")

    net = init_bsn(
        images.shape[1] * m * m,
        hidden=config.hidden,
        k_b=config.k_b,
        layers=config.layers,
        seed=config.seed,
    )
    targets = _reconstruction_target(images, config)
    opt = nm.Adam(net.params, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    batch = config.batch if config.batch else len(images)
    history = [purifier_loss(net, images, config)]
    for _ in range(config.epochs):
        order = rng.permutation(len(images))
        for start in range(0, len(images), batch):
            idx = order[start : start + batch]
            recon = fbie_graph(net, nm.Tensor(images[idx]), m)
            loss = nm.mse(recon, nm.constant(targets[idx]))
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(f"non-finite purifier loss {loss.data}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        history.append(purifier_loss(net, images, config))
    net.meta = {
        "kind": config.kind,
        "m": config.m,
        "K": config.K,
        "seed": config.seed,
        "epochs": config.epochs,
        "loss_history": history,
    }
    return net


# ---------------------------------------------------------------------------
# iteration selection and dynamic inference
# ---------------------------------------------------------------------------


def select_iterations(
    purifier: Purifier,
    model: ClassifierModel,
    clean_val: list[LabeledImage],
    attacked_val: np.ndarray,
    i_max: int = 10,
) -> int:
    """Best i in [1, i_max] by mean of standard and robust accuracy; ties go
    to the smaller i."""
    if not clean_val or len(attacked_val) == 0:
        raise InvalidArgumentError("validation sets must be nonempty")
    if len(attacked_val) != len(clean_val):
        raise ShapeMismatchError("clean and attacked validation sets differ in length")
    if i_max < 1:
        raise InvalidArgumentError("i_max must be >= 1")
    clean, labels = stack_images(clean_val)
    adv = np.asarray(attacked_val, dtype=np.float32)
    best_i, best_avg = 1, -1.0
    zc, za = clean, adv
    for i in range(1, i_max + 1):
        zc = purifier.apply_once(zc)
        za = purifier.apply_once(za)
        std = float((predict(model, zc).argmax(axis=1) == labels).mean())
        rob = float((predict(model, za).argmax(axis=1) == labels).mean())
        avg = 0.5 * (std + rob)
        if avg > best_avg + 1e-12:
            best_i, best_avg = i, avg
    return best_i


def dynamic_inference(
    purifier: Purifier,
    x: np.ndarray,
    sigma_n: float = 0.05,
    eps_clip: float = 16 / 255,
    seed: int = 0,
) -> np.ndarray:
    """Purify after adding clipped zero-mean Gaussian noise to the input."""
    if sigma_n < 0:
        raise InvalidArgumentError("noise sigma must be >= 0")
    x = np.asarray(x, dtype=np.float32)
    if sigma_n > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, sigma_n, size=x.shape).astype(np.float32)
        x = nk.clamp01(x + np.clip(noise, -eps_clip, eps_clip))
    return purifier(x)

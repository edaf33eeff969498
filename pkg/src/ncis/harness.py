"""End-to-end pipelines: evaluation metrics, experiment configs, report files."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import attacks as atk
from .analysis import mse_curve, write_curve_csv
from .classifier import ClassifierModel, load_classifier, predict, top_k, train_classifier
from .dataio import DatasetSpec, LabeledImage, generate_dataset, save_image, stack_images
from .errors import InvalidArgumentError, ShapeMismatchError
from .parallel import chunked_map
from .purifiers import (
    Purifier,
    PurifierConfig,
    PurifierTrainConfig,
    build_purifier,
    dynamic_inference,
    identity_purifier,
    load_bsn,
    select_iterations,
    train_purifier,
)


@dataclass
class EvalReport:
    standard_accuracy: float
    robust_accuracy: float
    psr_clean: float
    psr_adv: float
    prediction_accuracy: float
    top1_agreement: float
    topk_agreement: float
    k: int
    n_images: int
    seed: int
    wall_time_s: float
    config: dict = field(default_factory=dict)

    CSV_FIELDS = (
        "standard_accuracy",
        "robust_accuracy",
        "psr_clean",
        "psr_adv",
        "prediction_accuracy",
        "top1_agreement",
        "topk_agreement",
        "k",
        "n_images",
        "seed",
    )

    def csv_header(self) -> str:
        return ",".join(self.CSV_FIELDS)

    def csv_row(self) -> str:
        vals = []
        for name in self.CSV_FIELDS:
            v = getattr(self, name)
            vals.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        return ",".join(vals)


def topk_metrics(clean_topk, purified_topk, k: int) -> tuple[float, int, int]:
    """(|intersection|/k, 1 if top-1 labels match, 1 if clean top-1 is within
    the purified top-k) for one pair of ranked label lists."""
    if len(clean_topk) != k or len(purified_topk) != k:
        raise ShapeMismatchError(f"expected two length-{k} lists, got {len(clean_topk)} and {len(purified_topk)}")
    inter = len(set(clean_topk) & set(purified_topk))
    return inter / k, int(clean_topk[0] == purified_topk[0]), int(clean_topk[0] in purified_topk)


def evaluate(
    model: ClassifierModel,
    purifier: Purifier | None,
    clean_set: list[LabeledImage],
    attack_cfg: atk.AttackConfig,
    adv_images: np.ndarray | None = None,
    attack: str = "pgd",
    k: int = 5,
    dynamic_sigma: float | None = None,
    seed: int = 0,
) -> EvalReport:
    """Attack every image, purify clean and attacked copies, score everything.

    ``attack="bpda"`` crafts against the purified pipeline (straight-through
    backward); ``dynamic_sigma`` switches inference to noise-randomized
    purification at evaluation time.
    """
    t0 = time.perf_counter()
    if purifier is None:
        purifier = identity_purifier()
    images, labels = stack_images(clean_set)
    if not 1 <= k <= model.n_classes:
        raise InvalidArgumentError(f"k must be in [1, {model.n_classes}]")

    if adv_images is None:
        if attack == "pgd":
            adv_images = chunked_map(lambda xs, ys: atk.pgd(model, xs, ys, attack_cfg), images, labels)
        elif attack == "bpda":
            adv_images = chunked_map(
                lambda xs, ys: atk.bpda_pgd(model, purifier, xs, ys, attack_cfg), images, labels
            )
        else:
            raise InvalidArgumentError(f"unknown attack mode {attack!r}")
    elif len(adv_images) != len(images):
        raise ShapeMismatchError("adv_images length does not match clean set")

    if dynamic_sigma is not None:
        purified_clean = dynamic_inference(purifier, images, dynamic_sigma, seed=seed)
        purified_adv = dynamic_inference(purifier, adv_images, dynamic_sigma, seed=seed + 1)
    else:
        purified_clean = chunked_map(purifier, images)
        purified_adv = chunked_map(purifier, adv_images)

    raw_logits = predict(model, images)
    clean_logits = predict(model, purified_clean)
    adv_logits = predict(model, purified_adv)
    raw_pred = raw_logits.argmax(axis=1)
    clean_pred = clean_logits.argmax(axis=1)
    adv_pred = adv_logits.argmax(axis=1)

    pred_acc, top1_agree, topk_agree = [], [], []
    for i in range(len(images)):
        pa, t1, tk = topk_metrics(top_k(raw_logits[i], k), top_k(adv_logits[i], k), k)
        pred_acc.append(pa)
        top1_agree.append(t1)
        topk_agree.append(tk)

    return EvalReport(
        standard_accuracy=float((clean_pred == labels).mean()),
        robust_accuracy=float((adv_pred == labels).mean()),
        psr_clean=float((clean_pred == raw_pred).mean()),
        psr_adv=float((adv_pred == raw_pred).mean()),
        prediction_accuracy=float(np.mean(pred_acc)),
        top1_agreement=float(np.mean(top1_agree)),
        topk_agreement=float(np.mean(topk_agree)),
        k=k,
        n_images=len(images),
        seed=seed,
        wall_time_s=time.perf_counter() - t0,
        config={
            "attack": asdict(attack_cfg),
            "purifier": {"kind": purifier.kind, "K": purifier.K, "m": purifier.m, "i": purifier.iterations},
            "attack_mode": attack,
            "dynamic_sigma": dynamic_sigma,
        },
    )


# ---------------------------------------------------------------------------
# experiment configuration and pipeline
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train_count: int = 1600
    val_count: int = 100
    eval_count: int = 200
    classifier_checkpoint: str | None = None
    classifier_epochs: int = 12
    classifier_lr: float = 1e-3
    classifier_batch: int = 64
    purifier: PurifierConfig = field(default_factory=PurifierConfig)
    purifier_train: PurifierTrainConfig | None = None
    select_i: bool = False
    i_max: int = 10
    attack: atk.AttackConfig = field(default_factory=atk.AttackConfig)
    attack_mode: str = "pgd"
    dynamic_sigma: float | None = None
    topk: int = 5
    seed: int = 0
    out_dir: str = "runs/experiment"
    save_samples: int = 4

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        cfg = cls()
        data = dict(raw)
        if "dataset" in data:
            cfg.dataset = DatasetSpec(**data.pop("dataset"))
        if "purifier" in data:
            cfg.purifier = PurifierConfig(**data.pop("purifier"))
        if "purifier_train" in data and data["purifier_train"] is not None:
            cfg.purifier_train = PurifierTrainConfig(**data.pop("purifier_train"))
        else:
            data.pop("purifier_train", None)
        if "attack" in data:
            cfg.attack = atk.AttackConfig(**data.pop("attack"))
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise InvalidArgumentError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def validate(self):
        self.dataset.validate()
        self.purifier.validate()
        self.attack.validate()
        total = self.train_count + self.val_count + self.eval_count
        if total > self.dataset.count:
            raise InvalidArgumentError(
                f"train+val+eval = {total} exceeds dataset count {self.dataset.count}"
            )
        for path in (self.classifier_checkpoint, self.purifier.checkpoint):
            if path and not Path(path).exists():
                raise FileNotFoundError(f"missing file: {path}")


def _prepare_models(cfg: ExperimentConfig, train_set, splits_seed: int):
    if cfg.classifier_checkpoint:
        model = load_classifier(cfg.classifier_checkpoint)
    else:
        model = train_classifier(
            train_set,
            epochs=cfg.classifier_epochs,
            lr=cfg.classifier_lr,
            batch=cfg.classifier_batch,
            seed=splits_seed,
        )
    net = None
    if cfg.purifier.kind in ("fbi", "fbie", "ncis"):
        if cfg.purifier.checkpoint:
            net = load_bsn(cfg.purifier.checkpoint)
        else:
            base = cfg.purifier_train or PurifierTrainConfig(seed=splits_seed)
            tc = PurifierTrainConfig(
                kind=cfg.purifier.kind,
                m=cfg.purifier.m,
                K=cfg.purifier.K,
                epochs=base.epochs,
                lr=base.lr,
                batch=base.batch,
                seed=base.seed,
                hidden=base.hidden,
                k_b=base.k_b,
                layers=base.layers,
            )
            net = train_purifier(stack_images(train_set)[0], tc)
    return model, net


def run_experiment(config_path) -> dict:
    """Execute the full pipeline described by a JSON config; write reports.

    Returns a dict of output paths. Raises on any stage failure (the CLI maps
    that to a nonzero exit code).
    """
    cfg = ExperimentConfig.from_json(config_path)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data = generate_dataset(cfg.dataset)
    train_set = data[: cfg.train_count]
    val_set = data[cfg.train_count : cfg.train_count + cfg.val_count]
    eval_set = data[cfg.train_count + cfg.val_count : cfg.train_count + cfg.val_count + cfg.eval_count]

    model, net = _prepare_models(cfg, train_set, cfg.seed)
    purifier = build_purifier(cfg.purifier, net)

    if cfg.select_i and purifier.kind != "identity":
        val_images, val_labels = stack_images(val_set)
        val_adv = chunked_map(lambda xs, ys: atk.pgd(model, xs, ys, cfg.attack), val_images, val_labels)
        best_i = select_iterations(purifier, model, val_set, val_adv, cfg.i_max)
        purifier = purifier.with_iterations(best_i)

    images, labels = stack_images(eval_set)
    if cfg.attack_mode == "bpda":
        adv = chunked_map(lambda xs, ys: atk.bpda_pgd(model, purifier, xs, ys, cfg.attack), images, labels)
    else:
        adv = chunked_map(lambda xs, ys: atk.pgd(model, xs, ys, cfg.attack), images, labels)

    report = evaluate(
        model,
        purifier,
        eval_set,
        cfg.attack,
        adv_images=adv,
        attack=cfg.attack_mode,
        k=cfg.topk,
        dynamic_sigma=cfg.dynamic_sigma,
        seed=cfg.seed,
    )
    report.config["experiment"] = cfg.to_dict()
    report.config["selected_i"] = purifier.iterations

    paths = {
        "report_csv": out / "report.csv",
        "report_json": out / "report.json",
        "curve_csv": out / "mse_curve.csv",
    }
    with open(paths["report_csv"], "w", newline="") as f:
        f.write(report.csv_header() + "\n" + report.csv_row() + "\n")
    with open(paths["report_json"], "w") as f:
        json.dump(asdict(report), f, indent=2, default=str)

    pairs = [(images[i], adv[i]) for i in range(min(len(images), 32))]
    write_curve_csv(mse_curve(purifier, pairs, cfg.i_max), paths["curve_csv"])

    for idx in range(min(cfg.save_samples, len(images))):
        save_image(out / f"sample{idx}_clean.pgm", images[idx])
        save_image(out / f"sample{idx}_adv.pgm", adv[idx])
        save_image(out / f"sample{idx}_purified.pgm", purifier(adv[idx]))
    return {k: str(v) for k, v in paths.items()}


def ablation_suite(
    entries: list[tuple[str, Purifier]],
    model: ClassifierModel,
    clean_set: list[LabeledImage],
    attack_cfg: atk.AttackConfig,
    csv_path=None,
) -> list[dict]:
    """Evaluate several purifiers against one shared purifier-blind attack;
    report accuracy plus measured per-image purification time."""
    images, labels = stack_images(clean_set)
    adv = chunked_map(lambda xs, ys: atk.pgd(model, xs, ys, attack_cfg), images, labels)
    rows = []
    for name, purifier in entries:
        t0 = time.perf_counter()
        purified_adv = purifier(adv)
        per_image_s = (time.perf_counter() - t0) / len(images)
        purified_clean = purifier(images)
        std = float((predict(model, purified_clean).argmax(axis=1) == labels).mean())
        rob = float((predict(model, purified_adv).argmax(axis=1) == labels).mean())
        rows.append(
            {
                "name": name,
                "standard_accuracy": std,
                "robust_accuracy": rob,
                "per_image_time_s": per_image_s,
                "iterations": purifier.iterations,
            }
        )
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            f.write("name,standard_accuracy,robust_accuracy,per_image_time_s,iterations\n")
            for r in rows:
                f.write(
                    f"{r['name']},{r['standard_accuracy']:.6f},{r['robust_accuracy']:.6f},"
                    f"{r['per_image_time_s']:.6f},{r['iterations']}\n"
                )
    return rows

"""Command-line interface.

Subcommands mirror the pipeline stages; every one takes --config (JSON with
the same keys as ExperimentConfig) and flags that override individual keys.
All randomness flows from explicit seeds; NCIS_THREADS caps parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import attacks as atk
from .analysis import mse_curve, noise_statistics, write_curve_csv, write_noise_stats_csv
from .classifier import accuracy, load_classifier, save_classifier, train_classifier
from .dataio import generate_dataset, save_image, stack_images
from .harness import ExperimentConfig, ablation_suite, run_experiment
from .parallel import chunked_map
from .purifiers import build_purifier, save_bsn, select_iterations, train_purifier
from .smoothing import gaussian_kernel


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
        cfg.validate()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    for flag, target in (
        ("eps", "eps"),
        ("alpha", "alpha"),
        ("iters", "iterations"),
        ("norm", "norm"),
        ("targeted", "targeted"),
        ("target_class", "target_class"),
    ):
        v = getattr(args, flag, None)
        if v is not None and v is not False:
            setattr(cfg.attack, target, v)
    for flag, target in (("kind", "kind"), ("K", "K"), ("m", "m"), ("i", "i")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg.purifier, target, v)
    cfg.validate()
    return cfg


def _splits(cfg: ExperimentConfig):
    data = generate_dataset(cfg.dataset)
    a, b = cfg.train_count, cfg.train_count + cfg.val_count
    return data[:a], data[a:b], data[b : b + cfg.eval_count]


def _attack_batch(model, cfg, dataset):
    images, labels = stack_images(dataset)
    adv = chunked_map(lambda xs, ys: atk.pgd(model, xs, ys, cfg.attack), images, labels)
    return images, labels, adv


def _classifier_for(cfg, train_set):
    if cfg.classifier_checkpoint:
        return load_classifier(cfg.classifier_checkpoint)
    return train_classifier(
        train_set, epochs=cfg.classifier_epochs, lr=cfg.classifier_lr, batch=cfg.classifier_batch, seed=cfg.seed
    )


def cmd_gen_data(args):
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(cfg.dataset)
    with open(out / "labels.csv", "w", newline="") as f:
        f.write("index,label\n")
        for i, item in enumerate(data):
            save_image(out / f"img{i:05d}.pgm" if cfg.dataset.channels == 1 else out / f"img{i:05d}.ppm", item.image)
            f.write(f"{i},{item.label}\n")
    print(f"wrote {len(data)} images to {out}")


def cmd_train_classifier(args):
    cfg = _load_config(args)
    train_set, _, eval_set = _splits(cfg)
    model = _classifier_for(cfg, train_set)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "classifier.nck1"
    save_classifier(model, ckpt)
    held_out = accuracy(model, eval_set) if eval_set else float("nan")
    print(f"train accuracy {model.meta.get('train_accuracy', float('nan')):.4f}")
    print(f"held-out accuracy {held_out:.4f}")
    print(f"checkpoint {ckpt}")


def cmd_attack(args):
    cfg = _load_config(args)
    train_set, _, eval_set = _splits(cfg)
    model = _classifier_for(cfg, train_set)
    images, labels, adv = _attack_batch(model, cfg, eval_set)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .dataio import save_tensor

    for i in range(len(images)):
        save_image(out / f"adv{i:05d}.pgm", adv[i])
        save_tensor(out / f"residual{i:05d}.nct1", atk.residual(adv[i], images[i]).data)
    from .classifier import predict

    rob = float((predict(model, adv).argmax(axis=1) == labels).mean())
    print(f"post-attack accuracy {rob:.4f} over {len(images)} images")


def cmd_analyze_noise(args):
    cfg = _load_config(args)
    train_set, _, eval_set = _splits(cfg)
    model = _classifier_for(cfg, train_set)
    images, _, adv = _attack_batch(model, cfg, eval_set)
    noises = [adv[i] - images[i] for i in range(len(images))]
    stats = noise_statistics(noises, seed=cfg.seed, eps=cfg.attack.eps if cfg.attack.norm == "linf" else None)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "noise_stats.csv"
    write_noise_stats_csv(stats, path)
    for K, s in sorted(stats.items()):
        print(f"K={K}: mean of patch means {s.patch_means.mean():+.6f}, pooled skewness {s.pooled_skewness:+.4f}")
    print(f"wrote {path}")


def cmd_train_purifier(args):
    cfg = _load_config(args)
    if cfg.purifier.kind not in ("fbi", "fbie", "ncis"):
        print(f"purifier kind {cfg.purifier.kind!r} is not trainable", file=sys.stderr)
        return 2
    train_set, _, _ = _splits(cfg)
    from .purifiers import PurifierTrainConfig

    base = cfg.purifier_train or PurifierTrainConfig(seed=cfg.seed)
    tc = PurifierTrainConfig(
        kind=cfg.purifier.kind, m=cfg.purifier.m, K=cfg.purifier.K,
        epochs=base.epochs, lr=base.lr, batch=base.batch, seed=base.seed,
        hidden=base.hidden, k_b=base.k_b, layers=base.layers,
    )
    net = train_purifier(stack_images(train_set)[0], tc)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{cfg.purifier.kind}.nck1"
    save_bsn(net, ckpt)
    hist = net.meta["loss_history"]
    print(f"reconstruction loss {hist[0]:.6f} -> {hist[-1]:.6f} over {tc.epochs} epochs")
    print(f"checkpoint {ckpt}")


def cmd_select_iters(args):
    cfg = _load_config(args)
    train_set, val_set, _ = _splits(cfg)
    model = _classifier_for(cfg, train_set)
    from .harness import _prepare_models

    _, net = _prepare_models(cfg, train_set, cfg.seed)
    purifier = build_purifier(cfg.purifier, net)
    _, _, val_adv = _attack_batch(model, cfg, val_set)
    best = select_iterations(purifier, model, val_set, val_adv, cfg.i_max)
    print(f"selected i = {best}")
    return 0


def cmd_evaluate(args):
    paths = run_experiment(args.config)
    print(json.dumps(paths, indent=2))


def cmd_ablation(args):
    cfg = _load_config(args)
    train_set, val_set, eval_set = _splits(cfg)
    model = _classifier_for(cfg, train_set)
    train_images = stack_images(train_set)[0]
    from .purifiers import Purifier, PurifierTrainConfig

    epochs = (cfg.purifier_train or PurifierTrainConfig()).epochs
    nets = {}
    for kind, m, K in (("ncis", 2, 11), ("fbie", 2, 11), ("ncis", 1, 11), ("fbi", 1, 5)):
        tc = PurifierTrainConfig(kind=kind, m=m, K=K, epochs=epochs, seed=cfg.seed)
        nets[(kind, m)] = train_purifier(train_images, tc)
    i = cfg.purifier.i
    entries = [
        ("NCIS(m=2,K=11)", Purifier("ncis", nets[("ncis", 2)], m=2, K=11, iterations=i)),
        ("FBI-E(m=2)", Purifier("fbie", nets[("fbie", 2)], m=2, iterations=i)),
        ("FBI+GS(K=11)", Purifier("ncis", nets[("ncis", 1)], m=1, K=11, iterations=i)),
        ("FBI", Purifier("fbi", nets[("fbi", 1)], iterations=i)),
        ("GS(K=5)", Purifier("gs", K=5, iterations=i)),
        ("GS(K=11)", Purifier("gs", K=11, iterations=i)),
    ]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ablation_suite(entries, model, eval_set, cfg.attack, out / "ablation.csv")
    for r in rows:
        print(
            f"{r['name']:>16}: standard {r['standard_accuracy']:.4f} robust {r['robust_accuracy']:.4f} "
            f"time/image {r['per_image_time_s'] * 1e3:.2f} ms"
        )
    print(f"wrote {out / 'ablation.csv'}")


def cmd_mse_curve(args):
    cfg = _load_config(args)
    train_set, _, eval_set = _splits(cfg)
    model = _classifier_for(cfg, train_set)
    from .harness import _prepare_models

    _, net = _prepare_models(cfg, train_set, cfg.seed)
    purifier = build_purifier(cfg.purifier, net)
    images, _, adv = _attack_batch(model, cfg, eval_set)
    pairs = [(images[i], adv[i]) for i in range(len(images))]
    rows = mse_curve(purifier, pairs, cfg.i_max)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mse_curve.csv"
    write_curve_csv(rows, path)
    print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="pipeline seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--eps", type=float, help="attack budget")
        p.add_argument("--alpha", type=float, help="attack step size")
        p.add_argument("--iters", type=int, help="attack iterations")
        p.add_argument("--norm", choices=("linf", "l2"))
        p.add_argument("--targeted", action="store_true", default=None)
        p.add_argument("--target-class", dest="target_class", type=int)
        p.add_argument("--kind", choices=("gs", "fbi", "fbie", "ncis", "identity"))
        p.add_argument("--K", type=int, help="Gaussian kernel size")
        p.add_argument("--m", type=int, help="extension factor")
        p.add_argument("--i", type=int, help="purifier iterations")
        return p

    handlers = {
        "gen-data": cmd_gen_data,
        "train-classifier": cmd_train_classifier,
        "attack": cmd_attack,
        "analyze-noise": cmd_analyze_noise,
        "train-purifier": cmd_train_purifier,
        "select-iters": cmd_select_iters,
        "ablation": cmd_ablation,
        "mse-curve": cmd_mse_curve,
    }
    for name, handler in handlers.items():
        common(sub.add_parser(name)).set_defaults(handler=handler)

    p_eval = sub.add_parser("evaluate")
    p_eval.add_argument("--config", required=True, help="JSON experiment config")
    p_eval.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = args.handler(args)
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())

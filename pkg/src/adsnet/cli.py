"""Command-line entry point (``adsnet`` or ``python -m adsnet``)."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import data as D
from . import engine
from .config import RunConfig
from .errors import ADSNetError, ConfigError, DataError
from .metrics import evaluate_dataset

log = logging.getLogger("adsnet")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--deterministic", action="store_true", help="force deterministic kernels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adsnet", description="Polyp segmentation training and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="optimise a model and write checkpoint.pt + trainlog.csv")
    _add_common(p)
    p.add_argument("--dataset", help="training dataset name (default: data.train)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="score a checkpoint and write metrics.csv")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("predict", help="write an 8-bit mask for one image")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output mask path (.png)")
    p.add_argument("--prob", type=Path, help="also write the probability map (.npy)")

    p = sub.add_parser("visualize", help="write per-image panels of all intermediate maps")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--limit", type=int)

    p = sub.add_parser("make-toy-data", help="write a synthetic dataset folder")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("-n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)

    p = sub.add_parser("dump-config", help="print the effective config")
    _add_common(p)
    return parser


def _config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = base or (RunConfig.load(args.config) if args.config else RunConfig())
    over = {}
    if base is not None and args.config:
        over.update(RunConfig.load(args.config).to_flat())
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "deterministic", False):
        over["train.deterministic"] = True
    return (cfg.override(**over) if over else cfg).validate()


def _dataset(cfg: RunConfig, name: str):
    path = Path(name)
    if path.is_dir():
        return D.load_dataset(D.DatasetSpec(path.name, str(path)))
    return engine.resolve_dataset(cfg, name)


def cmd_train(args) -> int:
    cfg = _config(args)
    dataset = None
    if args.dataset and Path(args.dataset).is_dir():
        dataset = _dataset(cfg, args.dataset)
    elif args.dataset:
        cfg = cfg.override(**{"data.train": args.dataset})
    args.out.mkdir(parents=True, exist_ok=True)
    cfg.save(args.out / "config.txt")
    res = engine.train(cfg, args.out, dataset)
    last = res.log.entries[-1]
    print(f"trained {last['iteration'] + 1} iterations, final loss {last['loss']:.5f}; checkpoint {res.checkpoint}")
    return 0


def _load(args):
    model, cfg, _ = engine.load_checkpoint(args.checkpoint)
    return model, _config(args, cfg)


def cmd_evaluate(args) -> int:
    model, cfg = _load(args)
    dataset = _dataset(cfg, args.dataset)
    if len(dataset) == 0:
        raise DataError(f"dataset {args.dataset!r} is empty")
    report = evaluate_dataset(
        engine.model_predictor(model, cfg.image_size), dataset, Path(args.dataset).name, workers=args.workers, seed=cfg.seed
    )
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "metrics.csv").write_text(report.to_csv())
    table = report.format_table()
    (args.out / "summary.txt").write_text(table + "\n")
    print(table)
    for image_id, err in report.failures:
        log.warning("skipped %s: %s", image_id, err)
    return 0


def cmd_predict(args) -> int:
    model, cfg = _load(args)
    raw = D.read_image(args.image)
    rec = D.SampleRecord(args.image.stem, D.normalize_image(raw), D.MaskTensor(np.zeros(raw.shape[:2])), raw.shape[:2])
    prob = engine.model_predictor(model, cfg.image_size)(rec)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(((prob >= 0.5) * 255).astype(np.uint8)).save(args.out)
    if args.prob:
        np.save(args.prob, prob.astype(np.float32))
    print(f"wrote {args.out} ({raw.shape[1]}x{raw.shape[0]}, {int((prob >= 0.5).sum())} foreground pixels)")
    return 0


def cmd_visualize(args) -> int:
    from .visualize import visualize_panels

    model, cfg = _load(args)
    paths = visualize_panels(model, _dataset(cfg, args.dataset), args.out, cfg.image_size, args.limit)
    print(f"wrote {len(paths)} panel(s) to {args.out}")
    return 0


def cmd_make_toy_data(args) -> int:
    cfg = _config(args)
    try:
        ds = D.synthetic_toy_dataset(args.n, args.size, cfg.data.synthetic_seed if args.seed is None else args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    D.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} pairs to {args.out}")
    return 0


def cmd_dump_config(args) -> int:
    sys.stdout.write(_config(args).dumps())
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "visualize": cmd_visualize,
    "make-toy-data": cmd_make_toy_data,
    "dump-config": cmd_dump_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ADSNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

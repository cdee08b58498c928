"""Command-line surface: label generation, noise synthesis, training,
inference, evaluation and loss-curve export.

All randomness is governed by --seed (or the config's seed); no subcommand
mutates its input directories.
"""

import os

# cap BLAS parallelism before numpy loads; kernels themselves are single-threaded
if "N2B_THREADS" in os.environ:
    os.environ.setdefault("OPENBLAS_NUM_THREADS", os.environ["N2B_THREADS"])
    os.environ.setdefault("OMP_NUM_THREADS", os.environ["N2B_THREADS"])

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import (Checkpoint, CheckpointError, checkpoint_from_result,
                         load_checkpoint, save_checkpoint)
from .config import ConfigError, parse_config, serialize_config
from .filters import FilterSpec
from .image import ImageError, load_image, save_image
from .metrics import evaluate_pairs
from .networks import DnNet
from .noise import NoiseSpec
from .training import curve_to_csv, denoise, list_images, train


def _filter_spec(args) -> FilterSpec:
    return FilterSpec(
        kind=args.filter,
        kernel_size=args.kernel,
        gaussian_sigma=args.sigma,
        sigma_spatial=args.sigma_spatial,
        sigma_range=args.sigma_range,
    )


def cmd_make_labels(args) -> int:
    spec = _filter_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in list_images(args.input):
        save_image(spec.apply(load_image(path)), out / path.name)
    return 0


_LEVEL_FLAGS = {"gaussian": "sigma", "speckle": "variance",
                "salt_pepper": "prob", "text": "prob"}


def cmd_add_noise(args) -> int:
    flag = _LEVEL_FLAGS[args.model]
    fixed = getattr(args, flag)
    rng_arg = getattr(args, f"{flag}_range")
    if (fixed is None) == (rng_arg is None):
        raise ValueError(f"give exactly one of --{flag} or --{flag}-range")
    level = fixed if fixed is not None else tuple(float(x) for x in rng_arg.split(","))
    spec = NoiseSpec(args.model, level, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in list_images(args.input):
        sample = spec.apply(load_image(path), rng)
        save_image(sample.noisy, out / path.name)
    return 0


def cmd_train(args) -> int:
    config = parse_config(Path(args.config).read_text())
    out = Path(args.out if args.out is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(config.train)
    (out / "config.json").write_text(serialize_config(config))
    (out / "curves.csv").write_text(curve_to_csv(result.curve))
    save_checkpoint(checkpoint_from_result(result), out / "checkpoint.n2b")
    print(f"trained {config.train.total_steps} steps -> {out}")
    return 0


def _restore_dnnet(ckpt: Checkpoint) -> DnNet:
    cfg = ckpt.config
    net = DnNet(cfg.channels, cfg.depth, cfg.base_width)
    net.load_state(ckpt.dnnet_state)
    return net


def cmd_denoise(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    net = _restore_dnnet(ckpt)
    log = ckpt.config.use_log_transform
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in list_images(args.input):
        save_image(denoise(net, load_image(path), log_transform=log), out / path.name)
    return 0


def cmd_eval(args) -> int:
    ref_paths = list_images(args.ref)
    test_paths = list_images(args.test)
    ref_names = {p.name for p in ref_paths}
    test_by_name = {p.name: p for p in test_paths}
    missing = sorted(ref_names - set(test_by_name))
    if missing:
        raise ValueError(f"test directory lacks {len(missing)} reference file(s), "
                         f"first: {missing[0]}")
    pairs = [(load_image(test_by_name[p.name]), load_image(p)) for p in ref_paths]
    csv = evaluate_pairs(pairs, names=[p.name for p in ref_paths]).to_csv()
    if args.out:
        Path(args.out).write_text(csv)
    else:
        sys.stdout.write(csv)
    return 0


def cmd_curves(args) -> int:
    src = Path(args.run) / "curves.csv"
    if not src.exists():
        raise FileNotFoundError(f"no curves.csv under {args.run}")
    if args.out:
        Path(args.out).write_text(src.read_text())
    else:
        sys.stdout.write(src.read_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="n2b",
        description="Self-supervised denoising with blur-guided noise extraction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-labels", help="filter a noisy corpus into blurred labels")
    p.add_argument("--filter", required=True,
                   choices=["mean", "gaussian", "median", "bilateral"])
    p.add_argument("--kernel", type=int, default=15)
    p.add_argument("--sigma", type=float, default=2.5,
                   help="gaussian filter sigma")
    p.add_argument("--sigma-spatial", type=float, default=None)
    p.add_argument("--sigma-range", type=float, default=0.1)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_labels)

    p = sub.add_parser("add-noise", help="degrade a clean corpus")
    p.add_argument("--model", required=True,
                   choices=["gaussian", "speckle", "salt_pepper", "text"])
    p.add_argument("--sigma", type=float, help="gaussian sigma on the 0-255 scale")
    p.add_argument("--sigma-range", help="lo,hi")
    p.add_argument("--variance", type=float, help="speckle variance")
    p.add_argument("--variance-range", help="lo,hi")
    p.add_argument("--prob", type=float, help="salt & pepper / text probability")
    p.add_argument("--prob-range", help="lo,hi")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("train", help="run a training config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the config's output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="apply a trained denoiser to a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="PSNR/SSIM of test images against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="export the loss-curve CSV of a training run")
    p.add_argument("--run", required=True, help="training output directory")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_curves)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ImageError, ValueError,
            FileNotFoundError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

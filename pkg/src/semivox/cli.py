"""Command-line interface.

Subcommands: synth, augment, sdm, metrics, train, predict. Exit codes:
0 success, 1 runtime error (printed as `error: <kind>: <detail>` on stderr),
2 usage error. Metric output is fixed 6-decimal CSV so golden-file tests
stay byte-stable.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import SemivoxError
from .fourier import parse_view_specs, view_variance_views
from .geometry import dice_jaccard, signed_distance_map, surface_distances
from .losses import RampConfig
from .network import NetConfig, forward, load_checkpoint
from .training import TrainConfig, train
from .volume import (
    BinaryMask,
    Volume3,
    load_dataset,
    load_vvol,
    save_dataset,
    save_vvol,
    synth_dataset,
    zscore_normalize,
)


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must be 'n' or 'd,h,w'")
    return tuple(parts)  # type: ignore[return-value]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semivox",
        description="Desk-scale semi-supervised volumetric segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ellipsoid-phantom dataset")
    p.add_argument("--n", type=int, required=True, help="number of samples (>= 2)")
    p.add_argument("--dims", type=_parse_dims, default=(32, 32, 32),
                   help="volume dims as 'n' or 'd,h,w' (default 32,32,32)")
    p.add_argument("--labeled-ratio", type=float, default=0.2,
                   help="fraction of samples with usable labels (default 0.2)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out", required=True, help="output directory for .vvol files + manifest.json")

    p = sub.add_parser("augment", help="write rotated views of a volume")
    p.add_argument("--in", dest="input", required=True, help="input .vvol")
    p.add_argument("--views", default="z:0,z:90,y:90",
                   help="axis:angle list (default z:0,z:90,y:90)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sdm", help="signed distance map of a binary mask")
    p.add_argument("--mask", required=True, help="mask .vvol (thresholded at 0.5)")
    p.add_argument("--out", required=True, help="output .vvol")

    p = sub.add_parser("metrics", help="print 'dice,jaccard,hd95,asd' for a prediction")
    p.add_argument("--pred", required=True, help="predicted mask .vvol")
    p.add_argument("--gt", required=True, help="ground-truth mask .vvol")

    p = sub.add_parser("train", help="train on a synthesized dataset directory")
    p.add_argument("--data", required=True, help="dataset directory with manifest.json")
    p.add_argument("--out", required=True, help="run directory (config/logs/checkpoints)")
    p.add_argument("--epochs", type=int, default=60, help="training epochs (default 60)")
    p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate (default 0.01)")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="residual reweight coefficient (default 0.5)")
    p.add_argument("--beta", type=float, default=0.5,
                   help="supervised loss weight (default 0.5)")
    p.add_argument("--ramp-epochs", type=int, default=40,
                   help="epochs until the consistency weight reaches 1 (default 40)")
    p.add_argument("--sharpen-t", type=float, default=0.1,
                   help="pseudo-label sharpening temperature (default 0.1)")
    p.add_argument("--batch", type=int, default=4, help="batch size (default 4)")
    p.add_argument("--seed", type=int, default=0, help="shuffle + init seed (default 0)")
    p.add_argument("--views", default="z:0,z:90,y:90",
                   help="augmentation views (default z:0,z:90,y:90)")
    p.add_argument("--levels", type=int, default=5, help="encoder levels (default 5)")
    p.add_argument("--base-channels", type=int, default=4,
                   help="channels at the first level (default 4)")
    p.add_argument("--ckpt-every", type=int, default=10,
                   help="checkpoint cadence in epochs, 0 = final only (default 10)")

    p = sub.add_parser("predict", help="foreground probability for a volume")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--in", dest="input", required=True, help="input .vvol")
    p.add_argument("--out", required=True, help="output .vvol (foreground probability)")
    return parser


def _mask_from_vvol(path) -> BinaryMask:
    vol = load_vvol(path)
    return BinaryMask(vol.dims, (vol.data > 0.5).astype(np.uint8))


def _cmd_synth(args) -> int:
    ds = synth_dataset(args.n, args.dims, args.labeled_ratio, args.seed)
    manifest = save_dataset(ds, args.out)
    print(manifest)
    return 0


def _cmd_augment(args) -> int:
    vol = load_vvol(args.input)
    specs = parse_view_specs(args.views)
    views = view_variance_views(vol, specs)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.input))[0]
    for k, view in enumerate(views):
        path = os.path.join(args.out, f"{stem}_view{k}.vvol")
        save_vvol(view, path)
        print(path)
    return 0


def _cmd_sdm(args) -> int:
    mask = _mask_from_vvol(args.mask)
    sdm = signed_distance_map(mask)
    save_vvol(Volume3(mask.dims, (1.0, 1.0, 1.0), sdm.data), args.out)
    return 0


def _cmd_metrics(args) -> int:
    pred = _mask_from_vvol(args.pred)
    gt = _mask_from_vvol(args.gt)
    dice, jaccard = dice_jaccard(pred, gt)
    hd95, asd = surface_distances(pred, gt)
    print(f"{dice:.6f},{jaccard:.6f},{hd95:.6f},{asd:.6f}")
    return 0


def _cmd_train(args) -> int:
    ds = load_dataset(args.data)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        alpha=args.alpha,
        beta=args.beta,
        ramp=RampConfig(gamma_max=1.0, ramp_epochs=args.ramp_epochs),
        sharpen_t=args.sharpen_t,
        labeled_ratio=len(ds.labeled_ids) / len(ds),
        seed=args.seed,
        view_specs=tuple(parse_view_specs(args.views)),
        net=NetConfig(levels=args.levels, base_channels=args.base_channels, seed=args.seed),
        ckpt_every=args.ckpt_every,
    )
    _, reports = train(ds, cfg, run_dir=args.out)
    for r in reports:
        if r.eval is not None:
            hd = "nan" if r.eval.hd95 is None else f"{r.eval.hd95:.3f}"
            print(f"epoch {r.epoch}: total {r.mean_total:.4f} dice {r.eval.dice:.4f} hd95 {hd}")
        else:
            print(f"epoch {r.epoch}: total {r.mean_total:.4f}")
    return 0


def _cmd_predict(args) -> int:
    net, _ = load_checkpoint(args.ckpt)
    vol = load_vvol(args.input)
    out = forward(net, zscore_normalize(vol))
    fg = (out.p_lseg.data[1] + out.p_hseg.data[1]) / 2.0
    save_vvol(Volume3(vol.dims, vol.spacing, fg), args.out)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "augment": _cmd_augment,
    "sdm": _cmd_sdm,
    "metrics": _cmd_metrics,
    "train": _cmd_train,
    "predict": _cmd_predict,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SemivoxError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line toolkit: simulate, train, enhance, eval, svd, epi.

A single JSON config file (sections: model, noise, train, loss) drives
the subcommands; individual flags override config keys. Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import cv2
import numpy as np

from . import lfio
from .errors import (
    DatasetError,
    DegenerateInputError,
    DivergenceError,
    ShapeError,
    ValueRangeError,
    WeightFormatError,
)
from .lightfield import extract_epi, make_lightfield
from .metrics import center_sai_spectrum, evaluate_dataset
from .simulate import NoiseParams, simulate_lowlight
from .train import LossWeights, TrainConfig, train
from .unfold import ModelConfig, enhance, make_model


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="lfenhance", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="low-light simulate light field directories")
    sim.add_argument("--in", dest="input", required=True, help="LF dir, parent dir, or glob")
    sim.add_argument("--out", required=True)
    sim.add_argument("--alpha-mode", choices=["fixed", "dynamic"], default="fixed")
    sim.add_argument("--alpha", type=float, default=0.2)
    sim.add_argument("--alpha-range", type=float, nargs=2, default=[0.1, 0.3])
    sim.add_argument("--sigma255", type=float, default=20.0)
    sim.add_argument("--poisson-gain", type=float, default=0.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--bit-depth", type=int, choices=[8, 16], default=8)

    tr = sub.add_parser("train", help="train an enhancement model")
    tr.add_argument("--config", help="JSON config file")
    tr.add_argument("--data", required=True, help="dir of <scene>/{low,gt} pairs")
    tr.add_argument("--val-data", help="held-out dir of <scene>/{low,gt} pairs")
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--stages", type=int)
    tr.add_argument("--layers", type=int)
    tr.add_argument("--channels", type=int)
    tr.add_argument("--feature-block", choices=["dpef", "sas", "simplified"])
    tr.add_argument("--no-cdc", action="store_true")
    tr.add_argument("--share-weights", action="store_true")
    tr.add_argument("--illumination", choices=["signal", "dual"])
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--quiet", action="store_true")

    en = sub.add_parser("enhance", help="enhance one light field directory")
    en.add_argument("--weights", required=True)
    en.add_argument("--in", dest="input", required=True)
    en.add_argument("--out", required=True)
    en.add_argument("--dump-stages", help="also write per-stage outputs here")

    ev = sub.add_parser("eval", help="evaluate a model over paired data")
    ev.add_argument("--weights", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--report", required=True, help="CSV output path")

    sv = sub.add_parser("svd", help="singular value spectrum of the center view")
    sv.add_argument("--in", dest="input", required=True)
    sv.add_argument("--delta-from", help="checkpoint; adds the compensated spectrum")
    sv.add_argument("--topk", type=int, default=200)
    sv.add_argument("--out", required=True)

    ep = sub.add_parser("epi", help="write an epipolar slice as PNG")
    ep.add_argument("--in", dest="input", required=True)
    ep.add_argument("--orientation", choices=["h", "v"], required=True)
    ep.add_argument("--fixed-angular", type=int, required=True)
    ep.add_argument("--fixed-spatial", type=int, required=True)
    ep.add_argument("--out", required=True)
    return p


def _load_pairs(root):
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    pairs, names = [], []
    for scene in sorted(d for d in root.iterdir() if d.is_dir()):
        low, gt = scene / "low", scene / "gt"
        if lfio.is_lf_dir(low) and lfio.is_lf_dir(gt):
            pairs.append((lfio.load_lf_dir(low)[0], lfio.load_lf_dir(gt)[0]))
            names.append(scene.name)
    if not pairs:
        raise DatasetError(f"no <scene>/low + <scene>/gt pairs under {root}")
    return pairs, names


def _cmd_simulate(args) -> int:
    params = NoiseParams(
        alpha_mode=args.alpha_mode,
        alpha=args.alpha,
        alpha_range=tuple(args.alpha_range),
        gaussian_sigma_255=args.sigma255,
        poisson_gain=args.poisson_gain,
        seed=args.seed,
    )
    rng = np.random.default_rng(args.seed)
    out_root = Path(args.out)
    for src in lfio.find_lf_dirs(args.input):
        lf, _ = lfio.load_lf_dir(src)
        lowlight, alpha = simulate_lowlight(lf, params, rng)
        scene = out_root / src.name
        lfio.save_lf_dir(lf, scene / "gt", bit_depth=args.bit_depth)
        lfio.save_lf_dir(
            lowlight,
            scene / "low",
            bit_depth=args.bit_depth,
            extra={"seed": args.seed, "alpha_used": alpha, "noise": params.to_dict()},
        )
        print(f"{src.name}: alpha={alpha:.4f} -> {scene}")
    return 0


def _cmd_train(args) -> int:
    cfg = lfio.read_config_file(args.config) if args.config else {}
    model_d = dict(cfg.get("model", {}))
    if args.stages is not None:
        model_d["stages"] = args.stages
    if args.layers is not None:
        model_d["layers"] = args.layers
    if args.channels is not None:
        model_d["channels"] = args.channels
    if args.feature_block:
        model_d["feature_block"] = args.feature_block
    if args.no_cdc:
        model_d["use_cdc"] = False
    if args.share_weights:
        model_d["share_stage_weights"] = True
    if args.illumination:
        model_d["illumination"] = {"signal": "signal_dependent", "dual": "dual_variable"}[
            args.illumination
        ]
    train_d = dict(cfg.get("train", {}))
    if args.epochs is not None:
        train_d["epochs"] = args.epochs
    if args.seed is not None:
        train_d["seed"] = args.seed
    weights = LossWeights.from_dict(cfg.get("loss", {}))
    tcfg = TrainConfig.from_dict(train_d)

    dataset, _ = _load_pairs(args.data)
    model_d["angular"] = list(dataset[0][0].angular)
    mcfg = ModelConfig.from_dict(model_d)
    val = _load_pairs(args.val_data)[0] if args.val_data else None
    model = make_model(mcfg, seed=tcfg.seed)
    model, log = train(model, dataset, tcfg, weights, val_dataset=val, verbose=not args.quiet)
    checksum = lfio.save_weights(model, args.out)
    lfio.write_jsonl(str(args.out) + ".log.jsonl", log)
    print(f"saved {args.out} (sha256 {checksum[:12]}...)")
    return 0


def _cmd_enhance(args) -> int:
    model, _ = lfio.load_weights(args.weights)
    lf, _ = lfio.load_lf_dir(args.input)
    if args.dump_stages:
        out, stages = enhance(lf, model, return_stages=True)
        for i, info in enumerate(stages, start=1):
            stage_lf = make_lightfield(
                np.clip(info["lf_n"], 0.0, 1.0), validate_range=False
            )
            lfio.save_lf_dir(stage_lf, Path(args.dump_stages) / f"stage_{i}")
    else:
        out = enhance(lf, model)
    lfio.save_lf_dir(out, args.out)
    print(f"enhanced {args.input} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model, _ = lfio.load_weights(args.weights)
    dataset, names = _load_pairs(args.data)
    records = evaluate_dataset(model, dataset, names=names, per_stage=True)
    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    with open(report, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["name", "psnr_db", "ssim", "per_stage_psnr"])
        for r in records:
            wr.writerow(
                [r.name, f"{r.psnr_db:.4f}", f"{r.ssim:.5f}",
                 " ".join(f"{p:.3f}" for p in r.per_stage_psnr)]
            )
        wr.writerow(
            ["mean",
             f"{np.mean([r.psnr_db for r in records]):.4f}",
             f"{np.mean([r.ssim for r in records]):.5f}", ""]
        )
    print(f"wrote {report}")
    return 0


def _cmd_svd(args) -> int:
    lf, _ = lfio.load_lf_dir(args.input)
    _, logs_in = center_sai_spectrum(lf, args.topk)
    columns = [("log_sigma_input", logs_in)]
    if args.delta_from:
        model, _ = lfio.load_weights(args.delta_from)
        _, stages = enhance(lf, model, return_stages=True)
        compensated = make_lightfield(
            lf.data - stages[-1]["delta"], validate_range=False
        )
        columns.append(("log_sigma_compensated", center_sai_spectrum(compensated, args.topk)[1]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        f.write("# index " + " ".join(name for name, _ in columns) + "\n")
        for i in range(args.topk):
            f.write(f"{i} " + " ".join(f"{col[i]:.8f}" for _, col in columns) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_epi(args) -> int:
    lf, _ = lfio.load_lf_dir(args.input)
    orientation = {"h": "horizontal", "v": "vertical"}[args.orientation]
    channels = [
        extract_epi(lf, orientation, args.fixed_angular, args.fixed_spatial, c).data
        for c in range(lf.channels)
    ]
    img = np.stack(channels, axis=-1)
    img8 = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    if img8.shape[2] == 3:
        img8 = img8[:, :, ::-1]
    else:
        img8 = img8[:, :, 0]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(out), img8):
        raise DatasetError(f"could not write {out}")
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "svd": _cmd_svd,
    "epi": _cmd_epi,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (
        DatasetError,
        WeightFormatError,
        ShapeError,
        ValueRangeError,
        DegenerateInputError,
        FileNotFoundError,
        IndexError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

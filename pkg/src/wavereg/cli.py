"""Command-line entry point: ``wavereg {register,transform,metrics,dwt,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io, metrics
from .errors import RegistrationError
from .optimizer import RegistrationConfig, register
from .similarity import LossConfig
from .synth import KINDS, SynthSpec, synth_pair
from .volume import warp, warp_labels
from .wavelet import SUBBANDS, dwt3, filter_bank


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _normalize(img):
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)


def _emit(pairs):
    for key, value in pairs:
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        print(f"{key} = {value}")


def cmd_register(args):
    hm, moving = io.read_volume(args.moving)
    hf, fixed = io.read_volume(args.fixed)
    if hm.channels != 1 or hf.channels != 1:
        raise RegistrationError("register expects single-channel images")
    if hm.dims != hf.dims:
        raise RegistrationError(f"moving dims {hm.dims} differ from fixed dims {hf.dims}")
    stages = args.stages
    if len(stages) != 3:
        raise RegistrationError(f"--stages needs three values, got {stages}")
    config = RegistrationConfig(
        loss=LossConfig(args.loss, args.lam),
        diffeomorphic=args.diff,
        wavelet=args.wavelet,
        stage_iterations=tuple(stages),
        lr=args.lr,
        sq_steps=args.sq_steps,
    )
    mov, record = io.pad_to_multiple(_normalize(moving))
    fix, _ = io.pad_to_multiple(_normalize(fixed))
    result = register(mov, fix, config)
    flow = io.crop(result.flow, record)
    io.write_volume(args.out, io.VolumeHeader(hf.dims, hf.spacing, channels=3, role="flow"), flow)
    if args.save_pyramid:
        io.write_pyramid(args.save_pyramid, result.pyramid, args.wavelet, args.diff)
    if args.history:
        with open(args.history, "w") as fh:
            fh.write("# stage iteration loss\n")
            bounds = result.stage_bounds + [len(result.loss_history)]
            for stage in range(3):
                for it in range(bounds[stage], bounds[stage + 1]):
                    fh.write(f"{stage + 1} {it} {result.loss_history[it]!r}\n")
    _emit([
        ("iterations", len(result.loss_history)),
        ("final_loss", float(result.diagnostics["loss"])),
        ("similarity", float(result.diagnostics["similarity"])),
        ("smoothness", float(result.diagnostics["smoothness"])),
        ("neg_jacobian_percent", metrics.neg_jac_fraction(flow)),
    ])


def cmd_transform(args):
    _, flow = io.read_volume(args.flow)
    header, data = io.read_volume(args.input)
    if flow.shape[1:] != header.dims:
        raise RegistrationError(f"flow dims {flow.shape[1:]} differ from input dims {header.dims}")
    flow = flow.astype(np.float64)
    if args.labels:
        out = warp_labels(data, flow)
        role = "labels"
    else:
        out = warp(data.astype(np.float64), flow)
        role = "image"
    io.write_volume(args.out, io.VolumeHeader(header.dims, header.spacing, role=role), out)


def cmd_metrics(args):
    header, flow = io.read_volume(args.flow)
    flow = flow.astype(np.float64)
    pairs = [("neg_jacobian_percent", metrics.neg_jac_fraction(flow))]
    if bool(args.seg_a) != bool(args.seg_b):
        raise RegistrationError("--seg-a and --seg-b must be given together")
    if args.seg_a:
        ha, seg_a = io.read_volume(args.seg_a)
        _, seg_b = io.read_volume(args.seg_b)
        seg_a = warp_labels(np.rint(seg_a).astype(np.int64), flow)
        seg_b = np.rint(seg_b).astype(np.int64)
        scores = metrics.dice(seg_a, seg_b, args.labels)
        for lab in scores:
            pairs.append((f"dice_{lab}", scores[lab]))
            try:
                hd = metrics.hausdorff(seg_a, seg_b, lab, spacing=ha.spacing)
            except metrics.UndefinedMetricError:
                hd = float("nan")
            pairs.append((f"hausdorff_{lab}", hd))
    _emit(pairs)


def cmd_dwt(args):
    header, data = io.read_volume(args.input)
    bands = dwt3(data.astype(np.float64), filter_bank(args.wavelet))
    dims = tuple(n // 2 for n in header.dims)
    spacing = tuple(2 * s for s in header.spacing)
    for label in SUBBANDS:
        io.write_volume(f"{args.out_prefix}_{label}.raw",
                        io.VolumeHeader(dims, spacing, channels=header.channels, role=header.role
                                        if header.role != "labels" else "image",
                                        extra={"subband": label, "wavelet": args.wavelet}),
                        bands[label])


def cmd_synth(args):
    dims = tuple(args.dims)
    if len(dims) != 3:
        raise RegistrationError(f"--dims needs three values, got {args.dims}")
    pair = synth_pair(SynthSpec(args.kind, dims, args.max_disp, args.seed, labels=True))
    p = args.out_prefix
    io.write_volume(f"{p}_moving.raw", io.VolumeHeader(dims), pair.moving)
    io.write_volume(f"{p}_fixed.raw", io.VolumeHeader(dims), pair.fixed)
    io.write_volume(f"{p}_gt_flow.raw", io.VolumeHeader(dims, channels=3, role="flow"), pair.gt_flow)
    io.write_volume(f"{p}_labels_moving.raw", io.VolumeHeader(dims, role="labels"), pair.labels_moving)
    io.write_volume(f"{p}_labels_fixed.raw", io.VolumeHeader(dims, role="labels"), pair.labels_fixed)


def build_parser():
    parser = argparse.ArgumentParser(prog="wavereg", description="Wavelet-pyramid deformable registration.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register a moving image onto a fixed image")
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--out", required=True, help="output displacement field")
    p.add_argument("--diff", action="store_true", help="diffeomorphic (stationary velocity) mode")
    p.add_argument("--loss", choices=("ncc", "mse"), default="ncc")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="smoothness weight (default 2 for ncc, 0.01 for mse)")
    p.add_argument("--wavelet", choices=("haar", "db2"), default="haar")
    p.add_argument("--stages", type=_int_list, default=[100, 100, 100], help="iterations per stage, e.g. 100,100,100")
    p.add_argument("--lr", type=float, default=RegistrationConfig.lr)
    p.add_argument("--sq-steps", type=int, default=RegistrationConfig.sq_steps)
    p.add_argument("--save-pyramid")
    p.add_argument("--history", help="write the per-iteration loss to this text file")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("transform", help="warp an image or label volume with a flow")
    p.add_argument("--flow", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", action="store_true", help="nearest-neighbour sampling for label volumes")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("metrics", help="folding, and optionally Dice/Hausdorff after warping seg-a")
    p.add_argument("--flow", required=True)
    p.add_argument("--seg-a", help="moving segmentation; warped by the flow before scoring")
    p.add_argument("--seg-b", help="fixed segmentation")
    p.add_argument("--labels", type=_int_list, default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dwt", help="write the eight one-level sub-bands of a volume")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--wavelet", choices=("haar", "db2"), default="haar")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("synth", help="generate a synthetic pair with ground truth")
    p.add_argument("--kind", choices=KINDS, default="gaussian_bumps")
    p.add_argument("--dims", type=_int_list, default=[48, 48, 48])
    p.add_argument("--max-disp", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (RegistrationError, OSError, ValueError) as exc:
        print(f"wavereg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

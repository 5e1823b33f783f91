"""Command-line entry point: ``sardrn <command> ...``.

Exit codes: 0 success, 1 failed check (gradcheck), 2 usage or input
error, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .config import format_skips, load_config, parse_int_list, parse_skips
from .errors import ConfigurationError, NumericError, SardrnError
from .gradcheck import run_suite
from .imageio import load_image, save_image
from .metrics import MetricReport, epd_roa, psnr, ssim
from .modelio import load_model, save_model
from .network import DEFAULT_SKIPS, despeckle, impulse_receptive_field, receptive_field
from .plot import plot_csv
from .speckle import SpeckleConfig, apply_speckle, enl
from .training import LossRecord, blas_guard, train

log = logging.getLogger("sardrn")

GRADCHECK_TOLERANCE = 1e-5


class UsageError(SardrnError):
    pass


def _region(text: str) -> tuple[int, int, int, int]:
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"region must be x,y,w,h, got {text!r}") from None
    if w < 1 or h < 1 or x < 0 or y < 0:
        raise argparse.ArgumentTypeError(f"invalid region {text!r}")
    return x, y, w, h


def _crop(img: np.ndarray, region) -> np.ndarray:
    x, y, w, h = region
    if y + h > img.shape[0] or x + w > img.shape[1]:
        raise UsageError(f"region {region} exceeds image of size {img.shape[1]}x{img.shape[0]}")
    return img[y:y + h, x:x + w]


def _existing(path: str) -> str:
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    return path


# -- commands --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    img = load_image(_existing(args.input))
    noisy = apply_speckle(img, SpeckleConfig(args.looks, args.seed))
    save_image(noisy, args.out, args.maxval)
    for region in args.region or []:
        print(f"ENL {','.join(map(str, region))}: {enl(_crop(noisy, region)):.6f}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(_existing(args.config))
    paths = sorted(p for p in cfg.dataset_dir.iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise ConfigurationError(f"no .pgm images in {cfg.dataset_dir}")
    images = [load_image(p) for p in paths]
    out = cfg.output_dir
    out.mkdir(exist_ok=True)

    with open(out / "train.log", "w") as log_fh, open(out / "loss.csv", "w", newline="") as loss_fh:
        loss_csv = csv.writer(loss_fh)
        loss_csv.writerow(LossRecord._fields)
        log_fh.write("# iteration lr loss\n")

        def record(rec: LossRecord) -> None:
            log_fh.write(f"{rec.iteration} {rec.lr:.8g} {rec.loss:.10g}\n")
            loss_csv.writerow([rec.iteration, rec.epoch, repr(rec.lr), repr(rec.loss)])

        try:
            result = train(images, cfg.train, cfg.network_spec(), on_iteration=record)
        except NumericError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3

    with open(out / "validation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "psnr_db"])
        for rec in result.validation:
            writer.writerow([rec.epoch, repr(rec.psnr_db)])
    save_model(result.network, out / "model.sdrn")
    (out / "skips.txt").write_text(format_skips(cfg.effective_skips) + "\n")
    print(f"wrote {out / 'model.sdrn'} after {len(result.losses)} iterations")
    return 0


def cmd_despeckle(args) -> int:
    net = load_model(_existing(args.model), args.skips)
    img = load_image(_existing(args.input))
    save_image(despeckle(net, img), args.out, args.maxval)
    return 0


def _safe(fn, *a) -> float:
    try:
        return fn(*a)
    except SardrnError:
        return math.nan


def cmd_evaluate(args) -> int:
    ref = load_image(_existing(args.ref))
    test = load_image(_existing(args.test))
    if ref.shape != test.shape:
        raise UsageError(f"image sizes differ: {ref.shape} vs {test.shape}")
    report = MetricReport(
        psnr(test, ref, args.peak),
        ssim(test, ref, args.peak),
        _safe(epd_roa, test, ref, "horizontal"),
        _safe(epd_roa, test, ref, "vertical"),
        [(",".join(map(str, r)), _safe(enl, _crop(test, r))) for r in args.region or []],
    )
    print(report.table())
    if args.csv:
        new = not os.path.exists(args.csv) or os.path.getsize(args.csv) == 0
        with open(args.csv, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(("ref", "test") + MetricReport.CSV_HEADER)
            writer.writerow([args.ref, args.test, *report.csv_row()])
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(args.seed)
    worst = max(results, key=lambda r: r.max_rel_error)
    failed = [r for r in results if not r.max_rel_error < GRADCHECK_TOLERANCE]
    print(f"{len(results)} gradient checks, {len(failed)} above {GRADCHECK_TOLERANCE:g}")
    print(f"worst: {worst.label} relative error {worst.max_rel_error:.3e}")
    return 1 if failed else 0


def cmd_rf(args) -> int:
    report = receptive_field(dilations=args.dilations)
    print(f"depth             {report.depth}")
    print(f"common            {report.common_rf}")
    print(f"dilated_doubling  {report.dilated_doubling_rf}")
    print(f"config            {report.config_rf}")
    print(f"impulse           {impulse_receptive_field(args.dilations)}")
    return 0


def cmd_plot(args) -> int:
    plot_csv(_existing(args.csv), args.out, args.x, args.y)
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sardrn", description="Dilated residual SAR despeckling toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                        help="single-threaded BLAS for reproducible reductions (default on)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="apply Gamma speckle to a clean image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--looks", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--region", type=_region, action="append", help="x,y,w,h; repeatable")
    p.add_argument("--maxval", type=int, default=255)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("despeckle", help="apply a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skips", type=parse_skips, default=DEFAULT_SKIPS,
                   help="skip list the model was trained with, e.g. 1-3,4-7 or none")
    p.add_argument("--maxval", type=int, default=255)
    p.set_defaults(func=cmd_despeckle)

    p = sub.add_parser("evaluate", help="quality metrics of a test image against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--region", type=_region, action="append", help="x,y,w,h for ENL; repeatable")
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--csv", default="metrics.csv", help="CSV file to append to ('' disables)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("rf", help="receptive-field report")
    p.add_argument("--dilations", type=parse_int_list, default=(1, 2, 3, 4, 3, 2, 1))
    p.set_defaults(func=cmd_rf)

    p = sub.add_parser("plot", help="render a CSV column as an SVG line chart")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", default="iteration")
    p.add_argument("--y", default="loss")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with blas_guard(args.deterministic):
            return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SardrnError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

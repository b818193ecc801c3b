"""``mgan`` command line: train, sr, eval, degrade, params, inspect.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as CK
from . import config as C
from . import data as D
from . import metrics as M
from .model import build_model, param_breakdown, param_count

EXIT_USAGE = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def _load_config(path):
    if path is None:
        return C.RunConfig()
    try:
        return C.load(path).validate()
    except C.ConfigError as exc:
        raise CliError(EXIT_USAGE, f"bad config: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from None


def _load_ckpt(path):
    try:
        return CK.load_checkpoint(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read checkpoint {path}: {exc}") from None
    except (CK.CheckpointError, C.ConfigError) as exc:
        raise CliError(EXIT_USAGE, f"invalid checkpoint {path}: {exc}") from None


def _load_manifest(path, spec):
    if not Path(path).is_file():
        raise CliError(EXIT_IO, f"manifest not found: {path}")
    try:
        return D.read_manifest(path, spec)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read manifest {path}: {exc}") from None


def cmd_train(args):
    run = _load_config(args.config)
    manifest = _load_manifest(args.data, run.degradation)
    if not manifest.entries:
        raise CliError(EXIT_USAGE, f"manifest {args.data} lists no images")
    resume = None
    if args.resume:
        resume = _load_ckpt(args.resume)
        if resume.config.model != run.model:
            raise CliError(EXIT_USAGE, f"checkpoint {args.resume} does not match the model config")
    from .train import train

    model = build_model(run.model, seed=run.train.seed)
    with _threads(run.effective_threads()):
        try:
            ck = train(model, manifest, run.train, run.degradation, out_dir=args.out, resume=resume)
        except OSError as exc:
            raise CliError(EXIT_IO, f"I/O failure during training: {exc}") from None
    print(f"trained to epoch {ck.epoch} (step {ck.step}); checkpoints in {args.out}")
    return 0


def cmd_sr(args):
    ck = _load_ckpt(args.ckpt)
    if args.scale is not None and args.scale != ck.config.model.scale:
        raise CliError(EXIT_USAGE, f"--scale {args.scale} does not match checkpoint scale {ck.config.model.scale}")
    try:
        lr = D.load_image(args.input)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read image {args.input}: {exc}") from None
    model = ck.model()
    t0 = time.perf_counter()
    with _threads(ck.config.effective_threads()):
        try:
            sr = M.super_resolve(model, lr, ck.config.model.scale, self_ensemble=args.self_ensemble)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, str(exc)) from None
    elapsed = time.perf_counter() - t0
    try:
        D.save_image(args.output, sr)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.output}: {exc}") from None
    print(f"{args.input} {lr.shape[1]}x{lr.shape[0]} -> {sr.shape[1]}x{sr.shape[0]} in {elapsed:.2f}s")
    return 0


def cmd_eval(args):
    spec = D.DegradationSpec(kind=args.degradation, scale=args.scale)
    if args.blur_sigma is not None:
        spec.blur_sigma = args.blur_sigma
    try:
        spec.validate()
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    if args.baseline:
        model, threads = args.baseline, None
    else:
        ck = _load_ckpt(args.ckpt)
        if ck.config.model.scale != args.scale:
            raise CliError(EXIT_USAGE, f"--scale {args.scale} does not match checkpoint scale {ck.config.model.scale}")
        model, threads = ck.model(), ck.config.effective_threads()
    manifest = _load_manifest(args.data, spec)
    if not manifest.entries:
        raise CliError(EXIT_USAGE, f"manifest {args.data} lists no images")
    with _threads(threads) if threads else contextlib.nullcontext():
        report = M.evaluate(model, manifest, spec, shave=args.shave, self_ensemble=args.self_ensemble)
    try:
        report.save(args.report)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report {args.report}: {exc}") from None
    print(report.summary())
    return 0


def cmd_degrade(args):
    spec = D.DegradationSpec(kind=args.degradation, scale=args.scale)
    try:
        spec.validate()
        hr = D.load_image(args.input)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read image {args.input}: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    try:
        lr = D.degrade(hr, spec)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    try:
        D.save_image(args.output, lr)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.output}: {exc}") from None
    print(f"{spec.describe()}: {hr.shape[1]}x{hr.shape[0]} -> {lr.shape[1]}x{lr.shape[0]}")
    return 0


def cmd_params(args):
    run = _load_config(args.config)
    model = build_model(run.model, seed=run.train.seed)
    total = param_count(model)
    width = max(len(k) for k in param_breakdown(model))
    for name, n in param_breakdown(model).items():
        print(f"{name:<{width}}  {n:>12,}")
    print(f"{'total':<{width}}  {total:>12,}  ({total / 1e6:.3f} M)")
    return 0


def cmd_inspect(args):
    ck = _load_ckpt(args.ckpt)
    n = sum(int(np.prod(v.shape)) for v in ck.params.values())
    print(ck.config.dumps(), end="")
    print(f"# epoch {ck.epoch}, step {ck.step}, {len(ck.params)} tensors, {n:,} parameters, "
          f"optimizer state {'present' if ck.adam else 'absent'}")
    return 0


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    keys = C.help_text()
    p = argparse.ArgumentParser(prog="mgan", description="Multi-grained attention network for image super-resolution.",
                                epilog=keys, formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model", epilog=keys, formatter_class=fmt)
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--data", required=True, help="manifest: hr_path[TAB]lr_path per line")
    t.add_argument("--out", required=True, help="output directory for checkpoints and loss.csv")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sr", help="super-resolve one image")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--scale", type=int, help="expected scale; must match the checkpoint")
    s.add_argument("--self-ensemble", action="store_true", help="average over the 8 dihedral transforms")
    s.set_defaults(func=cmd_sr)

    e = sub.add_parser("eval", help="Y-channel PSNR/SSIM on a benchmark manifest")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--ckpt")
    src.add_argument("--baseline", choices=["bicubic"])
    e.add_argument("--data", required=True)
    e.add_argument("--scale", type=int, required=True)
    e.add_argument("--degradation", choices=D.DEGRADATIONS, default="BI")
    e.add_argument("--blur-sigma", type=float)
    e.add_argument("--shave", type=int, help="border pixels to ignore (default: scale)")
    e.add_argument("--self-ensemble", action="store_true")
    e.add_argument("--report", required=True, help="CSV report path")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("degrade", help="synthesize an LR image")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--scale", type=int, required=True)
    d.add_argument("--degradation", choices=D.DEGRADATIONS, default="BI")
    d.set_defaults(func=cmd_degrade)

    c = sub.add_parser("params", help="parameter count and per-module breakdown", epilog=keys, formatter_class=fmt)
    c.add_argument("--config", help="config file (default: the reference configuration)")
    c.set_defaults(func=cmd_params)

    i = sub.add_parser("inspect", help="print a checkpoint's configuration")
    i.add_argument("--ckpt", required=True)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mgan: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

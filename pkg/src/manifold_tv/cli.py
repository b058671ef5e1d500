"""Command line interface: ``manifold-tv <command> [flags]``.

Commands: generate, noise, denoise, gridsearch, metric, export.

Exit codes: 0 success, 1 invalid input or flags, 2 geometry domain error,
3 I/O failure.  Errors print one line of ``key=value`` pairs to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .cppa import FunctionalParams, SolverConfig, cppa_run, grid_search
from .datagen import NoiseSpec, add_noise, gen_lemniscate, gen_s2_field, gen_spd_image, mean_error
from .exceptions import DomainError, ParseError, ValidationError
from .imageio import export_csv, read_image, write_image
from .proximal import ProxSchedule

EXIT_OK, EXIT_VALIDATION, EXIT_DOMAIN, EXIT_IO = 0, 1, 2, 3

GENERATORS = {"lemniscate": (gen_lemniscate, 512),
              "s2field": (gen_s2_field, 64),
              "spdimage": (gen_spd_image, 25)}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _floats(text, name, counts):
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"{name}: cannot parse {text!r} as numbers") from exc
    if len(vals) not in counts:
        raise ValidationError(f"{name}: expected {' or '.join(map(str, counts))} values")
    if not all(math.isfinite(v) for v in vals):
        raise ValidationError(f"{name}: values must be finite")
    return vals


def _grid(text, name):
    vals = _floats(text, name, range(1, 10_000))
    if any(v < 0 for v in vals):
        raise ValidationError(f"{name}: values must be nonnegative")
    return vals


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}")
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}")
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _solver_flags(p):
    p.add_argument("--lambda0", type=_positive_float, default=math.pi / 2)
    p.add_argument("--cycles", type=_positive_int, default=None,
                   help="default 1000 for signals, 400 for images")
    p.add_argument("--inner-iters", type=_positive_int, default=50)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="manifold-tv",
                     description="Denoise manifold-valued signals and images with first "
                                 "and second order total variation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic data set")
    p.add_argument("--kind", choices=sorted(GENERATORS), required=True)
    p.add_argument("--size", type=_positive_int, default=None)
    p.add_argument("--output", required=True)

    p = sub.add_parser("noise", help="corrupt an image with noise")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--model", choices=["gaussian", "rician"], default="gaussian")
    p.add_argument("--sigma", type=_nonneg_float, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("denoise", help="run the cyclic proximal point solver")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--alpha", default="0", help="a or a1,a2")
    p.add_argument("--beta", default="0", help="b or b1,b2,b3")
    p.add_argument("--diag", default=None, help="diagnostics CSV path (default: stdout)")
    _solver_flags(p)

    p = sub.add_parser("gridsearch", help="pick (alpha, beta) by mean error")
    p.add_argument("--input", required=True, help="noisy image")
    p.add_argument("--reference", required=True, help="clean image")
    p.add_argument("--alphas", required=True)
    p.add_argument("--betas", required=True)
    p.add_argument("--output", default=None, help="write the best reconstruction here")
    _solver_flags(p)

    p = sub.add_parser("metric", help="mean error between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = sub.add_parser("export", help="export an image as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv"], default="csv")
    p.add_argument("--anisotropy", action="store_true",
                   help="append the geodesic anisotropy index (SPD only)")
    p.add_argument("--output", default=None, help="default: stdout")
    return parser


def _config(args):
    return SolverConfig(lambda0=args.lambda0, cycles=args.cycles,
                        prox_schedule=ProxSchedule(max_inner_iters=args.inner_iters),
                        seed=args.seed)


def _cmd_generate(args, out):
    fn, default = GENERATORS[args.kind]
    write_image(args.output, fn(args.size or default))


def _cmd_noise(args, out):
    img = read_image(args.input)
    write_image(args.output, add_noise(img, NoiseSpec(args.model, args.sigma, args.seed)))


def _cmd_denoise(args, out):
    params = FunctionalParams(_floats(args.alpha, "alpha", (1, 2)),
                              _floats(args.beta, "beta", (1, 3)))
    cfg = _config(args)
    img = read_image(args.input)
    stream = open(args.diag, "w") if args.diag else out
    try:
        stream.write("cycle,functional,elapsed\n")

        def emit(k, value, elapsed):
            stream.write(f"{k},{value!r},{elapsed:.6f}\n")

        result, _ = cppa_run(img.manifold, img, params, cfg, callback=emit)
    finally:
        if args.diag:
            stream.close()
    write_image(args.output, result)


def _cmd_gridsearch(args, out):
    noisy = read_image(args.input)
    clean = read_image(args.reference)
    res = grid_search(noisy.manifold, noisy, clean, _grid(args.alphas, "alphas"),
                      _grid(args.betas, "betas"), _config(args))
    out.write("alpha,beta,error\n")
    for a, b, e in res.table:
        out.write(f"{a!r},{b!r},{e!r}\n")
    out.write(f"best alpha={res.alpha!r} beta={res.beta!r} error={res.error!r}\n")
    if args.output:
        best, _ = cppa_run(noisy.manifold, noisy, FunctionalParams(res.alpha, res.beta),
                           _config(args), record_functional=False)
        write_image(args.output, best)


def _cmd_metric(args, out):
    out.write(f"{mean_error(read_image(args.a), read_image(args.b))!r}\n")


def _cmd_export(args, out):
    text = export_csv(read_image(args.input), anisotropy=args.anisotropy)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        out.write(text)


COMMANDS = {"generate": _cmd_generate, "noise": _cmd_noise, "denoise": _cmd_denoise,
            "gridsearch": _cmd_gridsearch, "metric": _cmd_metric, "export": _cmd_export}


def _fail(err, code, kind, **extra):
    fields = {"error": kind, "exit": code, **extra, "message": json.dumps(str(err))}
    sys.stderr.write(" ".join(f"{k}={v}" for k, v in fields.items()) + "\n")
    return code


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as err:
        return _fail(err, EXIT_VALIDATION, "usage")
    try:
        COMMANDS[args.command](args, out)
    except DomainError as err:
        extra = {}
        if err.cycle is not None:
            extra["cycle"] = err.cycle
        if err.index is not None:
            extra["pixels"] = json.dumps(err.index, separators=(",", ":"))
        return _fail(err, EXIT_DOMAIN, "domain", **extra)
    except (ValidationError, ParseError) as err:
        return _fail(err, EXIT_VALIDATION, "validation")
    except OSError as err:
        path = getattr(err, "filename", None)
        extra = {"path": json.dumps(str(path))} if path else {}
        return _fail(err, EXIT_IO, "io", **extra)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

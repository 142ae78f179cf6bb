"""Command-line interface.

Exit codes: 0 success (learn: converged), 1 bad flags, 2 unreadable input or
dimension mismatch, 3 learn stopped at the outer iteration cap, 4 numeric
abort.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__, core, fileio
from .bench import VARY_CHOICES, BenchConfig, run_bench, write_bench_csv
from .coding import code_signal
from .core import NORMALIZE_MODES, Dictionary, SolverConfig
from .exceptions import DimensionError, NumericalError
from .pipeline import CHANNEL_MODES, Dataset, RunConfig, normalize_array, run_csc
from .validation import check_fits, parse_float_list, parse_int_list

logger = logging.getLogger("dualcsc")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CAP, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; we reserve 2 for bad input."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1, got %s" % text)
    return value


def _nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0, got %s" % text)
    return value


def _positive_float(text):
    value = float(text)
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError("must be a finite number > 0, got %s" % text)
    return value


def _nonnegative_float(text):
    value = float(text)
    if not (value >= 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError("must be a finite number >= 0, got %s" % text)
    return value


def _support(text):
    try:
        sizes = parse_int_list(text, "filter size")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    if not 1 <= len(sizes) <= 3 or any(m < 1 for m in sizes):
        raise argparse.ArgumentTypeError(
            "expected m[,m2[,m3]] with entries >= 1, got %s" % text)
    return tuple(sizes)


def build_parser():
    parser = ArgumentParser(
        prog="dualcsc", description="Convolutional sparse coding with dual-domain solvers.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    common = ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for debug output)")
    sub = parser.add_subparsers(dest="command", required=True)

    learn = sub.add_parser("learn", parents=[common],
                           help="learn a dictionary from a directory of images")
    learn.add_argument("--input", required=True, help="directory of .png/.pgm images")
    learn.add_argument("--out", required=True, help="output directory")
    learn.add_argument("--filters", type=_positive_int, default=16, help="number of filters K")
    learn.add_argument("--filter-size", type=_support, default=(11,),
                       help="filter support m[,m2[,m3]]; three sizes treat the sorted "
                            "frames as one video volume")
    learn.add_argument("--beta", type=_positive_float, default=0.5)
    learn.add_argument("--rho", type=_positive_float, default=0.1)
    learn.add_argument("--tol", type=_positive_float, default=1e-3)
    learn.add_argument("--max-outer", type=_nonnegative_int, default=50)
    learn.add_argument("--max-admm", type=_nonnegative_int, default=1000)
    learn.add_argument("--max-mu-iters", type=_nonnegative_int, default=10)
    learn.add_argument("--seed", type=int, default=0)
    learn.add_argument("--normalize", choices=NORMALIZE_MODES, default="global")
    learn.add_argument("--channels", choices=CHANNEL_MODES, default="separate")
    learn.add_argument("--threads", type=_positive_int, default=1,
                       help="worker threads for per-image coding")
    learn.set_defaults(func=cmd_learn)

    enc = sub.add_parser("encode", parents=[common],
                         help="sparse maps of one image for a fixed dictionary")
    enc.add_argument("--dict", required=True)
    enc.add_argument("--input", required=True, help="image file")
    enc.add_argument("--out", required=True, help="output maps tensor")
    enc.add_argument("--beta", type=_positive_float, default=0.5)
    enc.add_argument("--rho", type=_positive_float, default=0.1)
    enc.add_argument("--max-admm", type=_nonnegative_int, default=1000)
    enc.add_argument("--admm-tol", type=_nonnegative_float, default=1e-4)
    enc.add_argument("--normalize", choices=NORMALIZE_MODES, default="global")
    enc.set_defaults(func=cmd_encode)

    rec = sub.add_parser("reconstruct", parents=[common],
                         help="synthesize an image from maps")
    rec.add_argument("--dict", required=True)
    rec.add_argument("--maps", required=True)
    rec.add_argument("--input", required=True,
                     help="reference image for the error (normalized like encode)")
    rec.add_argument("--out", required=True, help="output PNG")
    rec.add_argument("--normalize", choices=NORMALIZE_MODES, default="global")
    rec.set_defaults(func=cmd_reconstruct)

    bench = sub.add_parser("bench", parents=[common],
                           help="time the half-steps over a parameter grid")
    bench.add_argument("--vary", choices=VARY_CHOICES, required=True)
    bench.add_argument("--grid", required=True, help="comma-separated values")
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--size", type=_positive_int, default=64)
    bench.add_argument("--filters", type=_positive_int, default=16)
    bench.add_argument("--images", type=_positive_int, default=1)
    bench.add_argument("--beta", type=_positive_float, default=0.5)
    bench.add_argument("--rho", type=_positive_float, default=0.1)
    bench.add_argument("--filter-size", type=_positive_int, default=11)
    bench.add_argument("--admm-iters", type=_positive_int, default=50)
    bench.add_argument("--mu-iters", type=_positive_int, default=2)
    bench.add_argument("--cg-iters", type=_positive_int, default=20)
    bench.add_argument("--outer", type=_positive_int, default=2)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="CSV path (default: stdout)")
    bench.set_defaults(func=cmd_bench)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _load_dataset(path, channels, support):
    """Images of ``path`` as (names, array (N, J, *dims)) in solver order."""
    if not os.path.isdir(path):
        raise InputError("input directory %s does not exist" % path)
    try:
        names, arr = fileio.load_image_dir(path, color=(channels == "joint"))
    except (OSError, ValueError) as exc:
        raise InputError(str(exc))
    if len(support) == 1:
        support = support * 2
    if len(support) == 3:
        # frames stacked along a leading time axis form one signal
        arr = np.moveaxis(arr, 0, 1)[np.newaxis]
        names = ["video"]
    try:
        check_fits(support, arr.shape[2:])
    except DimensionError as exc:
        raise InputError(str(exc))
    return names, arr, support


def _load_image_for(dictionary, path):
    if dictionary.channels not in (1, 3):
        raise InputError("dictionary has %d channels; images need 1 or 3"
                         % dictionary.channels)
    try:
        img = fileio.load_image(path, color=dictionary.channels == 3)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc))
    x = img if img.ndim == 3 else img[np.newaxis]
    try:
        dictionary.check_grid(x.shape[1:])
    except DimensionError as exc:
        raise InputError(str(exc))
    return x


def _read_tensor(path, what):
    try:
        return fileio.read_tensor(path)
    except (OSError, ValueError) as exc:
        raise InputError("cannot read %s %s: %s" % (what, path, exc))


def _read_dictionary(path):
    arr = _read_tensor(path, "dictionary")
    try:
        return Dictionary(arr)
    except (DimensionError, NumericalError) as exc:
        raise InputError("bad dictionary %s: %s" % (path, exc))


def relative_error(x, y):
    """``||x - y|| / ||x||``, taken as 0 when both are zero."""
    num = float(np.linalg.norm(np.asarray(x) - np.asarray(y)))
    den = float(np.linalg.norm(x))
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


# ---------------------------------------------------------------------------
# commands


def cmd_learn(args):
    names, arr, support = _load_dataset(args.input, args.channels, args.filter_size)
    solver = SolverConfig(beta=args.beta, rho=args.rho, tol=args.tol,
                          max_outer=args.max_outer, max_admm=args.max_admm,
                          max_mu_iters=args.max_mu_iters, seed=args.seed,
                          normalize=args.normalize)
    cfg = RunConfig(solver, args.filters, support, Dataset.from_array(arr, names),
                    out_dir=args.out, channel_mode=args.channels)
    dictionary, maps, trace = run_csc(cfg, threads=args.threads)

    os.makedirs(args.out, exist_ok=True)
    fileio.write_tensor(os.path.join(args.out, "dict.csct"), dictionary.filters)
    for name, m in zip(_map_names(cfg, names), maps):
        fileio.write_tensor(os.path.join(args.out, "maps_%s.csct" % name), m.values)
    fileio.write_trace(os.path.join(args.out, "trace.csv"), trace)
    fileio.save_mosaic(os.path.join(args.out, "dict_mosaic.png"), dictionary.filters)

    final = trace.records[-1].objective.total if len(trace) else float("nan")
    print("objective %.10g after %d outer iterations (%s)"
          % (final, trace.records[-1].outer_iter if len(trace) else 0,
             "converged" if trace.converged else "iteration cap"))
    return EXIT_OK if trace.converged else EXIT_CAP


def _map_names(cfg, names):
    channels = cfg.dataset.channels
    if cfg.channel_mode == "separate" and channels > 1:
        return ["%s_c%d" % (n, j) for n in names for j in range(channels)]
    return names


def cmd_encode(args):
    dictionary = _read_dictionary(args.dict)
    x = _load_image_for(dictionary, args.input)
    x, _ = normalize_array(x, args.normalize)
    cfg = SolverConfig(beta=args.beta, rho=args.rho, max_admm=args.max_admm,
                       admm_tol=args.admm_tol, normalize=args.normalize)
    z, _, stats = code_signal(x, dictionary.filters, cfg)
    obj = core.objective_terms(x, dictionary.filters, z, args.beta)
    fileio.write_tensor(args.out, z)
    print("objective %.17g" % obj.total)
    print("data_term %.17g" % obj.data_term)
    print("l1_norm %.17g" % float(np.abs(z).sum()))
    print("admm_iterations %d" % stats.iterations)
    return EXIT_OK


def cmd_reconstruct(args):
    dictionary = _read_dictionary(args.dict)
    z = _read_tensor(args.maps, "maps")
    x = _load_image_for(dictionary, args.input)
    x, _ = normalize_array(x, args.normalize)
    if z.ndim != x.ndim or z.shape[0] != dictionary.n_filters or z.shape[1:] != x.shape[1:]:
        raise InputError("maps of shape %s do not match dictionary %s and image %s"
                         % (z.shape, dictionary.filters.shape, x.shape))
    recon = core.synthesize(dictionary.filters, z)
    fileio.save_image(args.out, recon)
    print("relative_error %.17g" % relative_error(x, recon))
    return EXIT_OK


def cmd_bench(args):
    try:
        grid = parse_float_list(args.grid, "grid")
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.vary in ("k", "n"):
        if any(v != int(v) or v < 1 for v in grid):
            raise UsageError("grid values for --vary %s must be positive integers" % args.vary)
        grid = [int(v) for v in grid]
    elif any(v <= 0 for v in grid):
        raise UsageError("beta values must be > 0")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    if args.filter_size > args.size:
        raise UsageError("--filter-size exceeds --size")
    cfg = BenchConfig(vary=args.vary, grid=grid, repeats=args.repeats, size=args.size,
                      n_filters=args.filters, n_images=args.images, beta=args.beta,
                      rho=args.rho, filter_size=args.filter_size, admm_iters=args.admm_iters,
                      mu_iters=args.mu_iters, cg_iters=args.cg_iters, outer=args.outer,
                      seed=args.seed)
    rows = run_bench(cfg)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_bench_csv(fh, rows)
    else:
        write_bench_csv(sys.stdout, rows)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print("dualcsc: error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print("dualcsc: input error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print("dualcsc: numeric abort: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


def run():
    sys.exit(main())

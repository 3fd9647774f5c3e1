"""Command-line entry point: ``msqi <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .errors import ConfigError, NumericalError
from .io import PgmFormatError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# flag name -> (RunConfig field, type)
_FLAGS = {
    "--domain": ("domain", str),
    "--h1": ("h1", float),
    "--mu": ("mu", float),
    "--nu": ("nu", float),
    "--levels": ("levels", int),
    "--degree": ("degree", int),
    "--kernel": ("kernel", str),
    "--function": ("function", str),
    "--grid-step": ("grid_step", float),
    "--error-inset": ("error_inset", str),
    "--seed": ("seed", int),
    "--karcher-eps": ("karcher_eps", float),
    "--karcher-max-iter": ("karcher_max_iter", int),
    "--out": ("out_dir", str),
    "--min-neighbors": ("min_neighbors", int),
    "--sigma": ("sigma", float),
    "--threshold": ("threshold", float),
    "--window": ("anomaly_window", int),
    "--repeats": ("bench_repeats", int),
    "--image": ("image", str),
    "--resolution": ("image_resolution", int),
}

_COMMANDS = {
    "gen-points": (ex.run_gen_points, "tile Halton sites for every level"),
    "approx": (ex.run_approx, "single-scale quasi-interpolation on the finest level"),
    "multiscale": (ex.run_multiscale, "scalar multiscale residual correction"),
    "manifold-multiscale": (ex.run_manifold_multiscale, "SO(3) / SPD(3) multiscale"),
    "convergence": (ex.run_convergence, "mu sweep and constants regression"),
    "anomaly": (ex.run_anomaly, "anomaly detection on the contaminated field"),
    "denoise": (ex.run_denoise, "noisy rotation field with site filtering"),
    "bench": (ex.run_bench, "Shepard vs quadratic MLS timing"),
    "image-demo": (ex.run_image_demo, "multiscale approximation of a PGM image"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msqi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--preset", choices=sorted(ex.PRESETS))
        p.add_argument("--mu-values", type=lambda s: [float(v) for v in s.split(",")],
                       help="comma-separated mu values for the sweep")
        p.add_argument("--record-timings", action="store_true", default=None)
        for flag, (dest, typ) in _FLAGS.items():
            names = (flag, "--h") if flag == "--h1" else (flag,)
            p.add_argument(*names, dest=dest, type=typ, default=None)
    return parser


def _summary(result):
    if isinstance(result, ex.ScalarRun | ex.ManifoldRun):
        return {"linf": [r.linf for r in result.table.rows], "single_scale": result.single_scale}
    if isinstance(result, ex.DenoiseRun):
        return vars(result)
    if isinstance(result, tuple) and result and hasattr(result[0], "k"):
        return {"log_C": result[0].log_C, "k": result[0].k}
    if isinstance(result, float):
        return {"linf": result}
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {dest: getattr(args, dest) for dest, _ in _FLAGS.values()}
    overrides["mu_values"] = args.mu_values
    overrides["record_timings"] = args.record_timings
    fn = _COMMANDS[args.command][0]
    try:
        cfg = ex.RunConfig.load(args.config, overrides, args.preset)
        result = fn(cfg)
    except ConfigError as exc:
        return _fail(args.command, exc, EXIT_CONFIG)
    except NumericalError as exc:
        return _fail(args.command, exc, EXIT_NUMERIC)
    except (OSError, PgmFormatError) as exc:
        return _fail(args.command, exc, EXIT_IO)
    summary = _summary(result)
    if summary is not None:
        print(json.dumps(summary, default=float))
    return EXIT_OK


def _fail(command, exc, code) -> int:
    report = {"command": command, "stage": getattr(exc, "stage", "configuration"),
              "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(report), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

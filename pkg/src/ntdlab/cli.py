"""Command line runner: ``ntdlab run <config> [--output DIR] [--threads K] [--verbose]``."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, load_config
from .errors import MeshError, PatchError, PotentialError
from .experiments import NumericalFailure, run_experiment

log = logging.getLogger("ntdlab")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _manifest(cfg, files, elapsed, started):
    return {
        "experiment": cfg.experiment,
        "config_sha256": cfg.source_hash,
        "versions": {"ntdlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "files": sorted(p.name for p in files),
        "timestamp": started,
        "wall_clock_seconds": elapsed,
    }


def run(config_path, output=None, threads=None):
    """Run one experiment; returns an exit code."""
    try:
        cfg = load_config(config_path)
    except FileNotFoundError:
        log.error("config file not found: %s", config_path)
        return EXIT_VALIDATION
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_VALIDATION

    out = Path(output or cfg.output or "ntdlab-output")
    created_dir = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    before = set(out.iterdir())
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()

    def cleanup():
        for p in set(out.iterdir()) - before:
            if p.is_dir():
                shutil.rmtree(p)
            else:
                p.unlink()
        if created_dir and not any(out.iterdir()):
            out.rmdir()

    try:
        files = run_experiment(cfg, out, threads)
    except (ConfigError, PotentialError, MeshError, PatchError) as exc:
        cleanup()
        log.error("invalid config: %s", exc)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        cleanup()
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except BaseException:
        cleanup()
        raise
    elapsed = time.perf_counter() - t0
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(_manifest(cfg, files, elapsed, started), indent=2) + "\n")
    for p in files:
        log.info("wrote %s", p)
    log.info("%s finished in %.2f s", cfg.experiment, elapsed)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ntdlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config", help="path to a TOML experiment config")
    p.add_argument("--output", help="output directory (overrides the config's output key)")
    p.add_argument("--threads", type=int, default=None, help="maximum worker threads")
    p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            log.error("--threads must be at least 1")
            return EXIT_VALIDATION
    return run(args.config, args.output, args.threads)


if __name__ == "__main__":
    sys.exit(main())

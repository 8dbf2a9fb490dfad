"""Command line entry point: abclab <kind> --config FILE --out DIR."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..geometry import ConfigurationError
from ..linalg import ConvergenceError, SingularMatrixError
from ..mesh import MeshError
from ..potential import ExtrapolationError, NoSignChangeError
from ..spectrum import DegenerateEigenvalueError
from .config import KINDS, ConfigError, load_config, number_list
from .fitting import FitError
from .run import CrossMeshError, run, write_error

STRUCTURED = (ConfigError, ConfigurationError, MeshError, DegenerateEigenvalueError, ConvergenceError,
              SingularMatrixError, FitError, CrossMeshError, ExtrapolationError, NoSignChangeError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abclab", description="Multipole eigenvalue experiments.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--h", type=float, default=None, help="override the mesh size")
    p.add_argument("--eps-list", default=None, help="comma separated eps values, decreasing")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg_hash = ""
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.kind:
            cfg = replace(cfg, kind=args.kind)
        cfg = cfg.with_overrides(args.h, number_list(args.eps_list) if args.eps_list else None)
        cfg_hash = cfg.hash
        outcome = run(cfg, args.out, threads=max(1, args.threads))
    except STRUCTURED as exc:
        rec = write_error(args.out, cfg_hash, exc)
        print(f"error: {rec['error']}: {rec['message']}", file=sys.stderr)
        return 2
    summary = (args.out / "summary.txt").read_text()
    print(summary, end="")
    return 0 if outcome.passed else 1


if __name__ == "__main__":
    sys.exit(main())

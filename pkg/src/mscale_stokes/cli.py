"""Command-line entry point: ``mscale-stokes {train,evaluate,profile,audit-geometry}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import EvalSet, parse_config
from .errors import CheckpointError, ConfigError, UsageError
from .geometry import acceptance_rate, compatibility_flux
from .io import checkpoint_load, checkpoint_save, write_history, write_profile
from .trainer import (TrainingDiverged, eval_points, evaluate_errors, problem_from_config,
                      profile_line, train)


def _cmd_train(args) -> int:
    config = parse_config(args.config)
    out = Path(args.out or config.output.directory)
    state = None
    if args.resume:
        saved_config, state = checkpoint_load(args.resume)
        if saved_config.networks != config.networks or saved_config.loss.variant != config.loss.variant:
            raise ConfigError(f"--resume: checkpoint {args.resume} was written for different networks")
    history, state = train(config, state=state)
    prec = config.output.precision
    write_history(history, out / "history.csv", prec)
    checkpoint_save(state, config, out / "checkpoint.ckpt")
    last = history[-1] if history else None
    print(f"trained to epoch {state.epoch}; outputs in {out}")
    if last is not None and last.err_u is not None:
        print(f"Err_u = {last.err_u:.6e}  Err_p = {last.err_p:.6e}")
    return 0


def _cmd_evaluate(args) -> int:
    config, state = checkpoint_load(args.ckpt)
    problem = problem_from_config(config)
    spec = EvalSet.parse(args.eval_set) if args.eval_set else config.training.eval_set
    pts = eval_points(problem.domain, spec, config.training.seeds.evaluation)
    err_u, err_p = evaluate_errors(state.fields, problem, pts)
    print(f"Err_u = {err_u:.17g}")
    print(f"Err_p = {err_p:.17g}")
    return 0


def _cmd_profile(args) -> int:
    config, state = checkpoint_load(args.ckpt)
    problem = problem_from_config(config)
    rows, excluded = profile_line(state.fields, problem, args.y, args.n)
    write_profile(rows, args.out, config.output.precision)
    if len(excluded):
        print(f"excluded {len(excluded)} points inside holes", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_audit(args) -> int:
    config = parse_config(args.config)
    problem = problem_from_config(config)
    d = problem.domain
    rate = acceptance_rate(d, args.proposals, np.random.default_rng(config.training.seeds.sampling))
    flux = compatibility_flux(d, problem.g, nodes=args.nodes)
    print(f"fluid area (exact)      = {d.fluid_area:.6f}")
    print(f"fluid area (estimate)   = {rate * d.rect_area:.6f}")
    print(f"acceptance rate         = {rate:.6f}  (exact {d.fluid_area / d.rect_area:.6f})")
    print(f"compatibility flux      = {flux:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mscale-stokes", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train networks from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="print Err_u and Err_p of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--eval-set", help="grid:NX,NY or random:N")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("profile", help="write fields along a horizontal line to CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("audit-geometry", help="sampler and boundary-flux diagnostics")
    p.add_argument("--config", required=True)
    p.add_argument("--proposals", type=int, default=1_000_000)
    p.add_argument("--nodes", type=int, default=2000, help="boundary quadrature nodes")
    p.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}: {exc.record}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

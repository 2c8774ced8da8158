"""Command-line entry point: run, sweep, oracle and tables subcommands.

Exit codes: 0 when every row passes, 1 when any row fails, 2 on invalid
configuration (including regime and space preconditions).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .discops import disc_ops, sites
from .errors import (
    BadBoxSize, BadDelta, GridTooCoarse, InvalidParams, LongJumpError, RegimeMismatch, SpaceMismatch, TooLarge,
)
from .exact import MAX_EXACT_N
from .harness import (
    EnsembleSummary, ExperimentConfig, apply_override, emit_outputs, load_config, parse_scalar, run_experiment,
)
from .kernel import kernel_build
from .regime import classify

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (InvalidParams, RegimeMismatch, SpaceMismatch, BadBoxSize, BadDelta, GridTooCoarse, TooLarge)


def _apply_flags(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.seed is not None:
        config = config.with_(seed=args.seed)
    if getattr(args, "out", None) is not None:
        config = config.with_(out_dir=str(args.out))
    return config


def _out_dir(config: ExperimentConfig, suffix: str = "") -> Path:
    base = Path(config.out_dir) if config.out_dir else Path("out") / config.experiment
    return base / suffix if suffix else base


def _finish(summaries: Sequence[EnsembleSummary]) -> int:
    return EXIT_PASS if all(s.passed for s in summaries) else EXIT_FAIL


def _run_and_emit(config: ExperimentConfig, workers: int, out: Path, plots: bool) -> EnsembleSummary:
    summary = run_experiment(config, workers)
    emit_outputs(summary, out, plots=plots)
    print(summary.report())
    print(f"wrote {out}")
    return summary


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_flags(load_config(args.config), args)
    return _finish([_run_and_emit(config, args.workers, _out_dir(config), not args.no_plots)])


def _parse_vary(text: str) -> tuple[str, list]:
    key, sep, values = text.partition("=")
    if not sep or not key or not values:
        raise InvalidParams(f"--vary expects key=v1,v2,... got {text!r}")
    return key.strip(), [parse_scalar(v) for v in values.split(",")]


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _apply_flags(load_config(args.config), args)
    key, values = _parse_vary(args.vary)
    variants = [(v, apply_override(config, key, v)) for v in values]
    summaries = []
    for value, variant in variants:
        print(f"== {key}={value}")
        summaries.append(_run_and_emit(variant, args.workers, _out_dir(config, f"{key}={value}"), not args.no_plots))
    return _finish(summaries)


def cmd_oracle(args: argparse.Namespace) -> int:
    config = _apply_flags(load_config(args.config), args)
    if config.params.n > MAX_EXACT_N:
        raise TooLarge(f"oracle checks need model.n <= {MAX_EXACT_N}")
    summaries = []
    for name in ("stationarity", "generator_closed_form"):
        variant = config.with_(experiment=name)
        summaries.append(_run_and_emit(variant, 1, _out_dir(config, name), plots=False))
    return _finish(summaries)


def cmd_tables(args: argparse.Namespace) -> int:
    config = _apply_flags(load_config(args.config), args)
    out = _out_dir(config, "tables")
    out.mkdir(parents=True, exist_ok=True)
    p = config.params
    kernel_build(p).dump_csv(out / "kernel.csv")
    info = classify(p)
    regime = {
        "theta_n": info.theta_n, "r_a": info.r_a, "space": info.space_tag.value, "h1_case": info.h1_case,
        "h2": info.h2, "theorem": info.theorem.value, "kappa1": info.kappa1, "chi_b": info.chi_b,
    }
    (out / "regime.json").write_text(json.dumps(regime, indent=2) + "\n")
    u = sites(p.n) / p.n
    for label, G in config.tests().items():
        ops = disc_ops(G, p)
        data = np.column_stack([u, G(u), ops.K_ab, ops.R_ab, ops.L_cont, ops.error_coef, ops.asym_linear])
        header = "u,G,K_ab,R_ab,L_cont,error_coef,asym_linear"
        np.savetxt(out / f"operators_{label}.csv", data, delimiter=",", header=header, comments="", fmt="%.17g")
    print(json.dumps(regime))
    print(f"wrote {out}")
    return EXIT_PASS


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("longjump.service:app", host=args.host, port=args.port)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longjump", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, workers: bool = True) -> None:
        p.add_argument("config", help="YAML file of flat dotted keys")
        p.add_argument("--seed", type=int, default=None, help="override sim.seed")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides out.dir)")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="ensemble worker processes")
            p.add_argument("--no-plots", action="store_true", help="skip PNG plots")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.set_defaults(func=cmd_run)
    sweep = sub.add_parser("sweep", help="run an experiment for several values of one key")
    common(sweep)
    sweep.add_argument("--vary", required=True, help="key=v1,v2,...")
    sweep.set_defaults(func=cmd_sweep)
    oracle = sub.add_parser("oracle", help="exact small-n stationarity and generator checks")
    common(oracle, workers=False)
    oracle.add_argument("--workers", type=int, default=1, help=argparse.SUPPRESS)
    oracle.set_defaults(func=cmd_oracle)
    tables = sub.add_parser("tables", help="dump kernel, regime and operator tables")
    common(tables, workers=False)
    tables.add_argument("--workers", type=int, default=1, help=argparse.SUPPRESS)
    tables.set_defaults(func=cmd_tables)
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LongJumpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

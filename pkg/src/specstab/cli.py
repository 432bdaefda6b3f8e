"""Command-line front end: gap, sda, cluster, sweep, and freq subcommands.

Every command is deterministic under a fixed seed; a run manifest (command,
inputs, seed, settings, version, wall time) is written alongside file
outputs and printed to stderr for stdout outputs, so the payload itself
stays bit-reproducible.

Exit codes: 0 ok, 2 parse error, 3 bad argument, 4 solver infeasible,
5 internal error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import spectral_cluster
from .eigen import spectral_gap
from .experiments import (
    CentersSpec,
    chain_sweep,
    frequency_experiment,
    sbm_sweep,
)
from .graph_core import GraphParseError, read_graph
from .sda_inner import InnerConfig
from .sda_outer import NoUpperBound, OuterConfig, SdaResult, compute_sda

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_ARGS = 3
EXIT_INFEASIBLE = 4
EXIT_INTERNAL = 5


def _manifest(args: argparse.Namespace, started: float) -> dict:
    settings = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    return {
        "command": args.command,
        "settings": settings,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }


def _emit(payload: str, out: str | None, manifest: dict) -> None:
    if out:
        path = Path(out)
        path.write_text(payload)
        path.with_suffix(path.suffix + ".manifest.json").write_text(
            json.dumps(manifest, indent=1) + "\n")
    else:
        sys.stdout.write(payload)
        sys.stderr.write(json.dumps(manifest) + "\n")


def _parse_floats(text: str) -> list[float]:
    """Comma list '2,4,8' or inclusive range 'start:stop:step'."""
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(round((stop - start) / step))
        vals = [start + i * step for i in range(count + 1)]
        return [v for v in vals if v <= stop + 1e-12]
    return [float(t) for t in text.split(",") if t]


def _outer_config(args: argparse.Namespace) -> OuterConfig:
    inner = InnerConfig(
        tol=args.tol_inner,
        h0=args.h0,
        max_steps=args.max_steps,
        stationarity_rtol=args.stat_rtol,
        extra_restarts=args.restarts,
    )
    schedule = tuple(float(c) for c in args.c_schedule.split(","))
    return OuterConfig(
        tol_f=args.tol_f,
        tol_eps=args.tol_eps,
        c_schedule=schedule,
        seed=args.seed,
        inner=inner,
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol-f", type=float, default=1e-8, help="zero-gap threshold")
    p.add_argument("--tol-eps", type=float, default=1e-6, help="bracket width stop")
    p.add_argument("--tol-inner", type=float, default=1e-9,
                   help="relative-change stop of the inner flow")
    p.add_argument("--stat-rtol", type=float, default=1e-6,
                   help="stationarity residual stop of the inner flow")
    p.add_argument("--h0", type=float, default=0.1, help="initial flow step size")
    p.add_argument("--max-steps", type=int, default=5000, help="inner step budget")
    p.add_argument("--c-schedule", default="0,10,100,1000",
                   help="comma list of increasing penalty parameters")
    p.add_argument("--restarts", type=int, default=1,
                   help="extra random inner starts on cold solves")
    p.add_argument("--seed", type=int, default=0)


def _sda_json(res: SdaResult) -> dict:
    p = res.E_star.pattern
    return {
        "k": res.k,
        "epsilon_star": res.epsilon_star,
        "scaled_gap": res.scaled_gap,
        "terminal_gap": res.terminal_gap,
        "certificate_residual": res.certificate_residual,
        "bracket": list(res.bracket),
        "c_used": res.c_used,
        "feasible": res.feasible,
        "restarts_used": res.restarts_used,
        "E_star": {"n": p.n, "edges": [[int(i), int(j), float(v)]
                                       for (i, j), v in zip(p.edges, res.E_star.values)]},
        "W_star": {"n": p.n, "edges": [[int(i), int(j), float(v)]
                                       for (i, j), v in zip(p.edges, res.W_star.weights)]},
        "trace": [[m, eps, f, fp, kind] for (m, eps, f, fp, kind) in res.trace],
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gap(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    w = read_graph(args.graph)
    report = spectral_gap(w, args.k)
    payload = json.dumps({
        "k": report.k,
        "lambda_k": report.lambda_k,
        "lambda_k1": report.lambda_k1,
        "gap": report.gap,
        "scaled_gap": report.scaled_gap,
    }, indent=1) + "\n"
    _emit(payload, args.out, _manifest(args, started))
    return EXIT_OK


def cmd_sda(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    w = read_graph(args.graph)
    config = _outer_config(args)
    res = compute_sda(w, args.k, config)
    payload = json.dumps(_sda_json(res), indent=1) + "\n"
    manifest = _manifest(args, started)
    if args.out:
        _emit(payload, args.out, manifest)
        sys.stdout.write(
            f"k={res.k} epsilon_star={res.epsilon_star!r} "
            f"certificate={res.certificate_residual!r} feasible={res.feasible}\n")
    else:
        _emit(payload, None, manifest)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            tr = csv.writer(fh)
            tr.writerow(["m", "eps", "f", "fprime", "kind"])
            for row in res.trace:
                tr.writerow([row[0], repr(row[1]), repr(row[2]),
                             "" if row[3] is None else repr(row[3]), row[4]])
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_cluster(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    w = read_graph(args.graph)
    assignment = spectral_cluster(w, args.k, args.seed, skip_kernel=args.skip_kernel)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["vertex", "label"])
    for v, lab in enumerate(assignment.labels):
        writer.writerow([v, int(lab)])
    _emit(buf.getvalue(), args.out, _manifest(args, started))
    return EXIT_OK


def _sweep_csv(rows, k_min: int, k_max: int, x_name: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    ks = list(range(k_min, k_max + 1))
    writer.writerow([x_name]
                    + [f"delta_{k}" for k in ks]
                    + [f"g_{k}" for k in ks]
                    + ["k_opt_delta", "k_opt_gap"])
    for row in rows:
        writer.writerow(
            [repr(row.x)]
            + [("" if row.delta(k) is None else repr(row.delta(k))) for k in ks]
            + [repr(row.scaled_gap(k)) for k in ks]
            + ["" if row.table.k_opt_delta is None else row.table.k_opt_delta,
               row.table.k_opt_gap])
    return buf.getvalue()


def cmd_sweep(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.k_min > args.k_max:
        raise ValueError("empty k range")
    config = _outer_config(args)
    if args.model == "chain":
        values = _parse_floats(args.mu1)
        rows = chain_sweep(values, args.k_min, args.k_max, r=args.r,
                           community_size=args.community_size, config=config)
        x_name = "mu1"
    else:
        values = _parse_floats(args.p1)
        rows = sbm_sweep(values, args.k_min, args.k_max, r=args.r,
                         community_size=int(args.community_size),
                         seed=args.seed, config=config)
        x_name = "p1"
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"sweep_{args.model}.csv"
    target.write_text(_sweep_csv(rows, args.k_min, args.k_max, x_name))
    manifest = _manifest(args, started)
    (out_dir / f"sweep_{args.model}.manifest.json").write_text(
        json.dumps(manifest, indent=1) + "\n")
    sys.stdout.write(f"{target}\n")
    return EXIT_OK


def cmd_freq(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.k_min > args.k_max:
        raise ValueError("empty k range")
    spec = CentersSpec(
        centers=tuple(_parse_floats(args.centers)),
        n=args.n,
        alpha=args.alpha,
        weight_tol=args.weight_tol,
        seed=args.seed,
    )
    config = _outer_config(args)
    table = frequency_experiment(spec, args.samples, (args.k_min, args.k_max), config)
    payload = json.dumps({
        "k_values": list(table.k_values),
        "samples": table.samples,
        "successes": table.successes,
        "failures": table.failures,
        "pct_gap": {str(k): table.pct_gap(k) for k in table.k_values},
        "pct_delta": {str(k): table.pct_delta(k) for k in table.k_values},
    }, indent=1) + "\n"
    _emit(payload, args.out, _manifest(args, started))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specstab",
        description="Stability of spectral clustering: spectral gaps and "
                    "structured distances to ambiguity.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap", help="kth spectral gap of a graph Laplacian")
    p.add_argument("graph")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("sda", help="structured distance to ambiguity")
    p.add_argument("graph")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--trace", help="write the outer-iteration trace CSV here")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sda)

    p = sub.add_parser("cluster", help="spectral clustering labels")
    p.add_argument("graph")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-kernel", action="store_true",
                   help="embed with the smallest nonzero eigenvalues instead")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep", help="k_opt sweep tables for the block models")
    p.add_argument("--model", choices=("chain", "sbm"), default="chain")
    p.add_argument("--mu1", default="2:100:2", help="coupling values (chain model)")
    p.add_argument("--p1", default="0.02:0.5:0.02", help="probability values (sbm)")
    p.add_argument("--r", type=int, default=8, help="number of communities")
    p.add_argument("--community-size", type=float, default=100.0)
    p.add_argument("--k-min", type=int, default=4)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--out", required=True, help="output directory")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("freq", help="frequency of optimal k on random centers")
    p.add_argument("--centers", default="0,8,16,24,32,40")
    p.add_argument("--n", type=int, default=120)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--weight-tol", type=float, default=1e-4)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--k-min", type=int, default=4)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--out")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_freq)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GraphParseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    except (ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ARGS
    except NoUpperBound as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INFEASIBLE
    except Exception as exc:  # pragma: no cover - defensive
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

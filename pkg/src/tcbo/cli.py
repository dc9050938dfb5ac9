"""Command-line harness: generate spin glasses, run solvers, compare traces.

Exit codes: 0 success, 2 usage or configuration error, 3 solver error
(unsupported structure, invalid counting numbers, invalid schedule, ...).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .estimators import TRWS, Heskes, MaxSumDiffusion, MPLP
from .exceptions import InvalidInputError, ModelParseError, DimensionMismatchError, TCBOError
from .model import gen_spin_glass, load_model, save_model

ALGORITHMS = ("msd", "heskes", "mplp", "trws", "trw-forward")
EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3

# structures each algorithm accepts; the first entry is the default
STRUCTURES = {
    "msd": ("pair_singleton",),
    "heskes": ("star_edge", "pair_singleton"),
    "mplp": ("star_edge",),
    "trws": ("chains",),
    "trw-forward": ("chains",),
}


class UsageError(Exception):
    pass


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", help="model file (tcbo-model v1)")
    p.add_argument("--mode", choices=("sum", "max"), default="max")
    p.add_argument("--structure", choices=("star_edge", "pair_singleton"), default=None,
                   help="region graph for msd/heskes/mplp")
    p.add_argument("--c-pair", type=float, default=1.0)
    p.add_argument("--c-singleton", type=float, default=None,
                   help="singleton counting number (default 1 for msd, 0 for heskes)")
    p.add_argument("--chains", choices=("grid", "tree"), default="grid",
                   help="tree decomposition for trws/trw-forward")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--bound-tol", type=float, default=1e-8)
    p.add_argument("--consistency-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None, help="trace output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcbo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a random grid spin glass")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--coupling", type=float, default=9.0, help="J ~ U[-coupling, coupling]")
    g.add_argument("--field", type=float, default=1.0, help="h ~ U[-field, field]")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)

    s = sub.add_parser("solve", help="run one solver and write its trace")
    _add_run_options(s)
    s.add_argument("--alg", choices=ALGORITHMS, required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")

    c = sub.add_parser("compare", help="run several solvers on one model")
    _add_run_options(c)
    c.add_argument("--algs", required=True, help="comma-separated algorithm names")
    return parser


def run_spec(args, alg: str) -> dict:
    """Validated, JSON-ready description of one run."""
    allowed = STRUCTURES[alg]
    structure = args.structure
    if alg in ("trws", "trw-forward"):
        if structure is not None:
            raise UsageError(f"--structure does not apply to {alg}; use --chains")
        structure = f"chains:{args.chains}"
    else:
        structure = structure or allowed[0]
        if structure not in allowed:
            raise UsageError(f"{alg} does not support structure {structure!r}")
    c_singleton = args.c_singleton
    if c_singleton is None:
        c_singleton = 0.0 if alg == "heskes" else 1.0
    if args.max_iters < 1:
        raise UsageError("--max-iters must be >= 1")
    if args.bound_tol <= 0 or args.consistency_tol <= 0:
        raise UsageError("tolerances must be positive")
    if args.c_pair < 0 or c_singleton < 0:
        raise UsageError("counting numbers must be non-negative")
    return {
        "model": str(args.model),
        "algorithm": alg,
        "mode": args.mode,
        "structure": structure,
        "c_pair": args.c_pair,
        "c_singleton": c_singleton,
        "max_iters": args.max_iters,
        "bound_tol": args.bound_tol,
        "consistency_tol": args.consistency_tol,
        "seed": args.seed,
    }


def make_estimator(spec: dict):
    common = dict(mode=spec["mode"], max_iters=spec["max_iters"], bound_tol=spec["bound_tol"],
                  consistency_tol=spec["consistency_tol"], seed=spec["seed"])
    alg = spec["algorithm"]
    if alg == "msd":
        return MaxSumDiffusion(c_pair=spec["c_pair"], c_singleton=spec["c_singleton"], **common)
    if alg == "heskes":
        return Heskes(structure=spec["structure"], c_pair=spec["c_pair"],
                      c_singleton=spec["c_singleton"], **common)
    if alg == "mplp":
        return MPLP(**common)
    chains = spec["structure"].split(":", 1)[1]
    schedule = "forward_backward" if alg == "trws" else "forward_only"
    return TRWS(schedule=schedule, chains=chains, **common)


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _load(path):
    try:
        return load_model(path)
    except (OSError, ModelParseError, DimensionMismatchError) as exc:
        raise UsageError(f"cannot read model {path}: {exc}") from None


def verdict(trace, tol: float = 1e-9) -> str:
    inc = trace.increases(tol)
    if not inc:
        return "monotone"
    where = ",".join(str(s) for s, _ in inc[:10])
    more = f" (+{len(inc) - 10} more)" if len(inc) > 10 else ""
    return f"non-monotone: {len(inc)} increases at sweeps {where}{more}"


def summary_line(spec: dict, trace) -> str:
    parts = [f"alg={spec['algorithm']}", f"mode={spec['mode']}",
             f"final_bound={trace.final_bound!r}", f"sweeps={trace.records[-1].sweep}",
             f"termination={trace.termination}"]
    if trace.assignment_energy is not None:
        parts.append(f"assignment_energy={trace.assignment_energy!r}")
    return " ".join(parts)


def cmd_gen(args) -> int:
    if args.rows < 1 or args.cols < 1:
        raise UsageError("--rows and --cols must be >= 1")
    if args.coupling < 0 or args.field < 0:
        raise UsageError("--coupling and --field must be non-negative")
    model = gen_spin_glass(args.rows, args.cols, args.coupling, args.field, seed=args.seed)
    save_model(model, args.output)
    print(f"{args.output}: vars={model.var_count} factors={len(model.factors)}")
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = run_spec(args, args.alg)
    model = _load(args.model)
    est = make_estimator(spec).fit(model)
    trace = est.trace_
    if args.format == "csv":
        text = trace.to_csv()
    else:
        text = json.dumps({"run_spec": spec, **trace.to_dict()}, indent=2) + "\n"
    if args.output is not None:
        _write(args.output, text)
    print(summary_line(spec, trace))
    return EXIT_OK


def wide_csv(names, traces) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep"] + [f"bound_{n}" for n in names])
    longest = max(len(t.records) for t in traces)
    for k in range(longest):
        w.writerow([k] + [repr(t.records[k].bound) if k < len(t.records) else "" for t in traces])
    return buf.getvalue()


def max_relative_gap(values) -> float:
    gap = 0.0
    for a in values:
        for b in values:
            scale = max(abs(a), abs(b), 1e-300)
            gap = max(gap, abs(a - b) / scale)
    return gap


def cmd_compare(args) -> int:
    names = [a.strip() for a in args.algs.split(",") if a.strip()]
    if len(names) < 2:
        raise UsageError("--algs needs at least two algorithms")
    unknown = [a for a in names if a not in ALGORITHMS]
    if unknown:
        raise UsageError(f"unknown algorithms: {', '.join(unknown)}")
    specs = [run_spec(args, a) for a in names]
    model = _load(args.model)
    threads = _thread_cap()

    def run(spec):
        return make_estimator(spec).fit(model).trace_

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(run, specs))
    else:
        traces = [run(s) for s in specs]
    labels = [f"{n}_{k}" if names.count(n) > 1 else n for k, n in enumerate(names)]
    if args.output is not None:
        _write(args.output, wide_csv(labels, traces))
    for label, spec, trace in zip(labels, specs, traces):
        print(f"{label}: final_bound={trace.final_bound!r} termination={trace.termination} "
              f"verdict={verdict(trace)}")
    print(f"max_relative_gap={max_relative_gap([t.final_bound for t in traces])!r}")
    return EXIT_OK


def _thread_cap() -> int:
    raw = os.environ.get("TCBO_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"TCBO_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("TCBO_THREADS must be >= 1")
    return value


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidInputError) as exc:
        print(f"tcbo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TCBOError as exc:
        print(f"tcbo: error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

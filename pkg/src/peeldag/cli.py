"""Command-line interface: ``peeldag <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import io
from .errors import DataError, NumericalError, PeelDagError
from .graph import HypothesisMode
from .inference import DpConfig, dp_edge_test, dp_pathway_test, lr_test
from .peeling import TuningGrid, learn_structure
from .refit import refit_dag
from .simulate import (SimDesign, generate_truth, run_experiment, run_structure_experiment,
                       sample_data, shd)

THREADS_ENV = "PEELDAG_THREADS"
PATH_KEYS = {"y", "x", "hypothesis", "oracle_supergraph", "out", "trace", "dump_v", "refit",
             "estimated", "truth", "design", "out_dir", "zero_edges"}
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file whose keys (flag names with underscores) override flags")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads for perturbation replicates (default from ${THREADS_ENV}, else 1)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="logging verbosity (default WARNING)")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--y", type=Path, help="CSV of primary variables (n rows, p columns)")
    p.add_argument("--x", type=Path, help="CSV of intervention variables (n rows, q columns)")
    p.add_argument("--header", action="store_true", help="both CSV files start with a header row")


def _add_tuning(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-grid", type=_floats, default=[0.05, 0.1, 0.15],
                   help="comma-separated thresholds tried by BIC (default 0.05,0.1,0.15)")
    p.add_argument("--n-gamma", type=int, default=100, help="size of the gamma grid (default 100)")
    p.add_argument("--max-kappa", type=int, default=30, help="largest sparsity budget tried (default 30)")


def _add_test(p: argparse.ArgumentParser) -> None:
    _add_data(p)
    _add_tuning(p)
    p.add_argument("--hypothesis", type=Path, help="JSON list of 1-based [k, j] edges, or {\"edges\": ...}")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level for the summary (default 0.05)")
    p.add_argument("--replicates", type=int, default=500, help="perturbation replicates M (default 500)")
    p.add_argument("--seed", type=int, default=0, help="master seed for the replicate streams (default 0)")
    p.add_argument("--oracle-supergraph", type=Path, help="super-graph JSON used instead of learning one")
    p.add_argument("--method", choices=["dp", "asymptotic", "both"], default="dp",
                   help="dp: perturbation p-value; asymptotic: chi-square only; both: both (default dp)")
    p.add_argument("--no-warm-start", action="store_true", help="start replicate fits from zero")
    p.add_argument("--out", type=Path, help="write the report JSON here (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peeldag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a truth and a data set from a simulation design")
    _add_common(p)
    p.add_argument("--p", type=int, default=10, help="primary variables (default 10)")
    p.add_argument("--q", type=int, default=30, help="intervention variables (default 30)")
    p.add_argument("--n", type=int, default=300, help="observations (default 300)")
    p.add_argument("--graph", choices=["random", "hub"], default="random", help="graph kind (default random)")
    p.add_argument("--setup", choices=["A", "B", "C"], default="A", help="intervention setup (default A)")
    p.add_argument("--x-corr", type=float, default=0.5, help="AR(1) correlation of X (default 0.5)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--zero-edges", type=Path, help="JSON edge list forced to zero in U")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for x.csv, y.csv, truth.json")

    p = sub.add_parser("learn", help="estimate the super-graph by nodewise fits and peeling")
    _add_common(p)
    _add_data(p)
    _add_tuning(p)
    p.add_argument("--out", type=Path, help="super-graph JSON (default: stdout)")
    p.add_argument("--trace", type=Path, help="write the peeling trace JSON here")
    p.add_argument("--dump-v", type=Path, help="write the estimated reduced form (q x p) as CSV")
    p.add_argument("--refit", type=Path, metavar="DIR",
                   help="also refit U and W; writes u.csv, w.csv and edges.json into DIR")
    p.add_argument("--ancestral-rule", choices=["all", "layer"], default="all",
                   help="which peeled nodes a new leaf is tested against (default all)")

    p = sub.add_parser("test-edge", help="test H0: U_kj = 0 for every hypothesized edge")
    _add_common(p)
    _add_test(p)

    p = sub.add_parser("test-path", help="test H0: some edge of a directed pathway is absent")
    _add_common(p)
    _add_test(p)

    p = sub.add_parser("eval", help="structural Hamming distance between two edge sets")
    _add_common(p)
    p.add_argument("--estimated", type=Path, help="JSON edge list, DAG or weighted edge list")
    p.add_argument("--truth", type=Path, help="JSON edge list, DAG or weighted edge list")
    p.add_argument("--p", type=int, help="node count when neither file states it")
    p.add_argument("--out", type=Path, help="write the result JSON here (default: stdout)")

    p = sub.add_parser("experiment", help="run a type-I error / power or SHD experiment from a design file")
    _add_common(p)
    p.add_argument("--design", type=Path, help="JSON design file")
    p.add_argument("--out", type=Path, help="result table path (default: stdout as CSV)")
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="table format (default csv)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    known = vars(args)
    for key, value in cfg.items():
        if key in ("command", "config") or key not in known:
            raise UsageError(f"unknown config key {key!r}")
        if key in PATH_KEYS and value is not None:
            value = Path(value)
        setattr(args, key, value)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _tuning(args) -> TuningGrid:
    if not args.tau_grid or args.n_gamma < 1 or args.max_kappa < 1:
        raise UsageError("tuning grids must be nonempty")
    return TuningGrid(taus=tuple(args.tau_grid), n_gamma=args.n_gamma, max_kappa=args.max_kappa)


def _emit_json(obj: Any, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(io.dumps(obj))
    else:
        io.write_json(path, obj)


def cmd_simulate(args) -> int:
    design = SimDesign(args.p, args.q, args.n, args.graph, args.setup, x_corr=args.x_corr, seed=args.seed)
    zero = []
    if args.zero_edges:
        _, zero = io.read_edge_list(args.zero_edges)
    rng = np.random.default_rng(args.seed)
    truth = generate_truth(design, rng, zero_edges=zero)
    x, y = sample_data(truth, args.n, args.x_corr, rng)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix(out / "x.csv", x)
    io.write_matrix(out / "y.csv", y)
    doc = io.dag_to_dict(truth.dag)
    doc["supergraph"] = io.supergraph_to_dict(truth.supergraph())
    io.write_json(out / "truth.json", doc)
    return EXIT_OK


def cmd_learn(args) -> int:
    _require(args, "y", "x")
    data = io.parse_dataset(args.y, args.x, args.header)
    s, est, trace = learn_structure(data.x, data.y, _tuning(args), ancestral_rule=args.ancestral_rule)
    _emit_json(io.supergraph_to_dict(s), args.out)
    if args.trace:
        io.write_json(args.trace, {
            "schema_version": io.SCHEMA_VERSION,
            "rounds": [{"height": r.height,
                        "pairs": [[l + 1, j + 1] for l, j in r.pairs],
                        "removed": [j + 1 for j in r.removed],
                        "edges": [[k + 1, j + 1] for k, j in r.edges]} for r in trace.rounds],
            "tuning": [{"node": j + 1, "gamma": c.gamma, "tau": c.tau, "kappa": c.kappa}
                       for j, c in enumerate(est.configs)],
        })
    if args.dump_v:
        io.write_matrix(args.dump_v, est.v)
    if args.refit:
        dag = refit_dag(data.x, data.y, s, tau_grid=tuple(args.tau_grid), n_gamma=args.n_gamma,
                        max_kappa=args.max_kappa)
        d = Path(args.refit)
        d.mkdir(parents=True, exist_ok=True)
        io.write_matrix(d / "u.csv", dag.u)
        io.write_matrix(d / "w.csv", dag.w)
        io.write_json(d / "edges.json", io.weighted_edges(dag))
    return EXIT_OK


def _summary(rep, alpha: float) -> str:
    verdict = "reject" if rep.pvalue <= alpha else "do not reject"
    edges = ", ".join(f"({k + 1},{j + 1})" for k, j in rep.hypothesis)
    lines = [f"{rep.mode} test [{rep.method}] of {{{edges}}}: p-value {rep.pvalue:.4g} ({verdict} at {alpha:g})"]
    if rep.reason:
        lines.append(f"  note: {rep.reason}")
    if rep.contained.size:
        lines.append(f"  contained replicates: {rep.n_contained}/{rep.contained.size}"
                     f" (failed {rep.n_failed})")
    lines.append(f"  asymptotic p-value: {rep.asymptotic_pvalue:.4g}")
    return "\n".join(lines) + "\n"


def _cmd_test(args, mode: HypothesisMode) -> int:
    _require(args, "y", "x", "hypothesis")
    data = io.parse_dataset(args.y, args.x, args.header)
    hyp = io.hypothesis_from_json(io.read_json(args.hypothesis), mode)
    oracle = None
    if args.oracle_supergraph:
        oracle = io.supergraph_from_dict(io.read_json(args.oracle_supergraph))
    tuning = _tuning(args)
    if args.method == "asymptotic":
        rep = lr_test(data.x, data.y, hyp, tuning, supergraph=oracle)
    else:
        dp = DpConfig(args.replicates, args.seed, args.threads, not args.no_warm_start)
        fn = dp_pathway_test if mode is HypothesisMode.PATHWAY else dp_edge_test
        rep = fn(data.x, data.y, hyp, dp, tuning, supergraph=oracle)
    doc = io.report_to_dict(rep)
    if args.method == "both":
        doc["asymptotic"] = io.report_to_dict(lr_test(data.x, data.y, hyp, tuning, supergraph=oracle))
    if args.out is None:
        sys.stdout.write(io.dumps(doc))
    else:
        io.write_json(args.out, doc)
    sys.stderr.write(_summary(rep, args.alpha))
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "estimated", "truth")
    p_est, est = io.read_edge_list(args.estimated)
    p_true, true = io.read_edge_list(args.truth)
    p = args.p or p_est or p_true
    if p is None:
        p = 1 + max([max(e) for e in est + true], default=0)
    a, b = np.zeros((p, p)), np.zeros((p, p))
    for k, j in est:
        a[k, j] = 1.0
    for k, j in true:
        b[k, j] = 1.0
    _emit_json({"schema_version": io.SCHEMA_VERSION, "p": p, "shd": shd(a, b),
                "estimated_edges": len(set(est)), "true_edges": len(set(true))}, args.out)
    return EXIT_OK


def _design_from(doc: Dict[str, Any]) -> SimDesign:
    d = dict(doc)
    if "sigma2_range" in d:
        d["sigma2_range"] = tuple(d["sigma2_range"])
    try:
        return SimDesign(**d)
    except TypeError as exc:
        raise UsageError(f"bad design block: {exc}") from None


def cmd_experiment(args) -> int:
    _require(args, "design")
    doc = io.read_json(args.design)
    design = _design_from(doc.get("design", {}))
    kind = doc.get("kind", "test")
    reps = int(doc.get("reps", 10))
    if kind == "structure":
        rows = run_structure_experiment(design, reps)
    elif kind == "test":
        if "hypothesis" not in doc:
            raise UsageError("design file needs a hypothesis")
        hyp = io.hypothesis_from_json(doc["hypothesis"])
        dp = DpConfig(int(doc.get("replicates", 200)), int(doc.get("seed", design.seed)), args.threads)
        rows = run_experiment(design, hyp, doc.get("alternatives", [0.0]), reps, dp,
                              doc.get("methods", ["dp", "lr", "olr"]), float(doc.get("alpha", 0.05)))
    else:
        raise UsageError(f"unknown experiment kind {kind!r}")
    if args.out is None:
        if args.format == "json":
            sys.stdout.write(io.dumps(io.table_document(rows)))
        else:
            cols = list(rows[0].keys()) if rows else []
            w = csv.DictWriter(sys.stdout, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: io.format_cell(r.get(k)) for k in cols})
    else:
        io.emit_report(rows, args.out, args.format)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "test-edge": lambda a: _cmd_test(a, HypothesisMode.EDGE),
    "test-path": lambda a: _cmd_test(a, HypothesisMode.PATHWAY),
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(parser, args)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"peeldag: error: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        sys.stderr.write(f"peeldag: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (DataError, PeelDagError) as exc:
        sys.stderr.write(f"peeldag: data error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"peeldag: invalid input: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

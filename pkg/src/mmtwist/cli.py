"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or parameter error, 3 numerical
failure.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .clustering import KmeansConfig, Partition, misclustering
from .errors import ContractError, DataError, NumericalError, ParameterError
from .io import (
    graph_from_tensor,
    load_layered_edgelist,
    preprocess,
    read_labels,
    write_labels,
    write_layered_edgelist,
    write_matrix,
)
from .model import planted_params, sample_labels, sample_tensor
from .twist import AUTO, TwistConfig, twist_pipeline

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser, top):
    # defaults live on the top-level parser only, so flags work on either side
    # of the subcommand
    default = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--seed", type=int, default=default(None), help="base random seed")
    parser.add_argument("--threads", type=int, default=default(1), help="worker threads")
    parser.add_argument(
        "--format", choices=("csv", "json"), default=default(None), help="output format"
    )


def build_parser():
    parser = _Parser(prog="mmtwist", description=__doc__.splitlines()[0])
    _common(parser, True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="run a simulation config, emit a results table")
    _common(p, False)
    p.add_argument("config", help="key = value experiment file")
    p.add_argument("-o", "--output", help="write results here instead of stdout")
    p.add_argument("--fast", action="store_true", help="cap replicates at 20")
    p.add_argument("--replicates", type=int, help="override the replicate count")

    p = sub.add_parser("fit", help="run the pipeline on a layered edge list")
    _common(p, False)
    p.add_argument("edges", help="layered edge-list TSV")
    p.add_argument("--r", type=int, required=True, help="node-factor rank")
    p.add_argument("--m", type=int, required=True, help="number of layer classes")
    p.add_argument("--kbar", type=int, required=True, help="number of global communities")
    p.add_argument("--k-local", help="local community count, one int or a comma list")
    p.add_argument("--layer-method", choices=("kmeans", "supnorm"), default="kmeans")
    p.add_argument("--epsilon", type=float, help="initial threshold for --layer-method supnorm")
    p.add_argument("--init", choices=("best", "spectral", "hosvd"), default="best")
    p.add_argument("--iter-max", type=int, default=30)
    p.add_argument("--delta1", type=float)
    p.add_argument("--delta2", type=float)
    p.add_argument("--weight-min", type=float, default=0.0)
    p.add_argument("--min-component", type=int, default=0)
    p.add_argument("--intersect", action="store_true")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("sample", help="sample a planted instance to an edge list")
    _common(p, False)
    p.add_argument("params", help="key = value file with n, L, m, K, d, alpha")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="misclustering between two label files")
    _common(p, False)
    p.add_argument("estimate")
    p.add_argument("truth")
    return parser


def _emit(text, path=None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    cfg = harness.load_config(args.config)
    if args.fast:
        cfg = harness.fast(cfg)
    if args.replicates is not None:
        cfg = replace(cfg, replicates=args.replicates)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    rows = harness.run_experiment(cfg, threads=max(1, args.threads))
    fmt = args.format or "csv"
    _emit(harness.rows_to_csv(rows) if fmt == "csv" else harness.rows_to_json(rows), args.output)


def _k_local(text, m):
    if text is None:
        return None
    counts = [int(s) for s in text.split(",")]
    if len(counts) == 1:
        return counts[0]
    if len(counts) != m:
        raise ParameterError(f"--k-local needs 1 or {m} values, got {len(counts)}")
    return counts


def cmd_fit(args):
    graph = load_layered_edgelist(args.edges)
    A, nodes, layers = preprocess(graph, args.weight_min, args.min_component, args.intersect)
    n, _, L = A.shape
    if not 1 <= args.m <= args.r <= n or args.m > L:
        raise ParameterError(
            f"need 1 <= m <= r <= n and m <= L; got m={args.m}, r={args.r}, n={n}, L={L}"
        )
    config = TwistConfig(
        r=args.r,
        m=args.m,
        iter_max=args.iter_max,
        delta1=AUTO if args.delta1 is None else args.delta1,
        delta2=AUTO if args.delta2 is None else args.delta2,
    )
    km = KmeansConfig(seed=args.seed or 0)
    res = twist_pipeline(
        A,
        config,
        args.kbar,
        n_local=_k_local(args.k_local, args.m),
        layer_method=args.layer_method,
        init=args.init,
        epsilon0=args.epsilon,
        kmeans_config=km,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_labels(out / "global_labels.tsv", nodes, res.global_partition.labels)
    write_labels(out / "layer_labels.tsv", layers, res.layer_partition.labels)
    for j, part in enumerate(res.local_partitions):
        if part is not None:
            write_labels(out / f"local_labels_{j}.tsv", nodes, part.labels)
    write_matrix(out / "U.tsv", nodes, res.embedding.U)
    write_matrix(out / "W.tsv", layers, res.embedding.W)
    emb = res.embedding
    summary = dict(
        nodes=n,
        layers=L,
        iterations=emb.iterations_run,
        delta1=emb.deltas[0],
        delta2=emb.deltas[1],
        global_clusters=res.global_partition.n_clusters,
        layer_clusters=res.layer_partition.n_clusters,
    )
    if args.format == "csv":
        _emit(",".join(summary) + "\n" + ",".join(str(v) for v in summary.values()) + "\n")
    else:
        _emit(json.dumps(summary) + "\n")


def cmd_sample(args):
    entries = harness.read_keyvalue(args.params)
    allowed = {"n", "L", "m", "K", "d", "alpha", "seed", "self_loops"}
    unknown = set(entries) - allowed
    if unknown:
        raise ParameterError(f"unknown keys: {sorted(unknown)}")
    missing = {"n", "L", "m", "K", "d", "alpha"} - set(entries)
    if missing:
        raise ParameterError(f"missing keys: {sorted(missing)}")
    point = {k: harness.parse_number(k, entries[k]) for k in harness.SWEEPABLE}
    harness.check_point(point)
    seed = args.seed
    if seed is None:
        seed = harness.parse_int("seed", entries.get("seed", "0"))
    loops = harness.parse_flag("self_loops", entries.get("self_loops", "false"))

    params = planted_params(point["n"], point["m"], point["K"], point["d"], point["alpha"], seed)
    labels = sample_labels(params, point["L"], seed)
    A = sample_tensor(params, labels, seed, loops)
    graph = graph_from_tensor(A)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_layered_edgelist(out / "edges.tsv", graph)
    write_labels(out / "layer_labels.tsv", graph.layer_names, labels)
    truth = Partition.from_labels(np.column_stack(params.memberships))
    write_labels(out / "global_labels.tsv", graph.node_ids, truth.labels)
    for j, z in enumerate(params.memberships):
        write_labels(out / f"local_labels_{j}.tsv", graph.node_ids, z)


def cmd_eval(args):
    est_ids, est = read_labels(args.estimate)
    truth_ids, truth = read_labels(args.truth)
    if set(est_ids) != set(truth_ids):
        raise DataError("label files cover different items")
    order = {item: i for i, item in enumerate(truth_ids)}
    aligned = np.empty_like(est)
    aligned[[order[item] for item in est_ids]] = est
    count, rate = misclustering(Partition.from_labels(aligned), Partition.from_labels(truth))
    if args.format == "json":
        _emit(json.dumps({"count": count, "rate": rate}) + "\n")
    elif args.format == "csv":
        _emit(f"count,rate\n{count},{rate!r}\n")
    else:
        _emit(f"{rate!r}\n")


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "sample": cmd_sample, "eval": cmd_eval}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ParameterError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

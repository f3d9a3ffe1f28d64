"""Command-line entry points: gen-sbm, partition, run, eval."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import data
from .federation import Federation, global_test_accuracy, run_federation
from .local_model import LinearModelWeights
from .partition import balanced_edge_cut, edge_cut, label_distribution, louvain_split

log = logging.getLogger("fedgta")


def _add_dataclass_flags(parser, cls, skip=()):
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar=f.type.upper())


def _split(graph, method: str, clients: int, seed: int):
    if method == "louvain":
        return louvain_split(graph, clients, seed)
    if method == "metis":
        return balanced_edge_cut(graph, clients, seed)
    raise SystemExit(f"unknown split method {method!r}")


def cmd_gen_sbm(args) -> None:
    kwargs = {}
    for f in dataclasses.fields(data.SbmSpec):
        raw = getattr(args, f.name)
        if raw is not None:
            kwargs[f.name] = data._coerce(raw, {"int": int, "float": float, "bool": bool}[f.type], f.name)
    graph = data.generate_sbm(data.SbmSpec(**kwargs))
    data.save_dataset(graph, args.out)
    print(f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges, {graph.num_classes} classes to {args.out}")


def cmd_partition(args) -> None:
    graph = data.load_dataset(args.data)
    part = _split(graph, args.method, args.clients, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.save_assignment(part, out / "assignment.csv")
    dist = label_distribution(part, graph)
    data.save_matrix(out / "label_distribution.csv", dist,
                     header=[f"class_{c}" for c in range(graph.num_classes)])
    print(f"{args.method}: {part.num_clients} clients, sizes {part.sizes().tolist()}, "
          f"edge cut {edge_cut(graph, part.assignment)}")


def _load_partition(args, graph):
    if args.assignment:
        return data.load_assignment(graph, args.assignment)
    return _split(graph, args.method, args.clients, args.partition_seed)


def _config(args):
    values = data.read_config_values(args.config) if args.config else {}
    for section, cls in data.SECTIONS.items():
        for f in dataclasses.fields(cls):
            raw = getattr(args, f.name, None)
            if f.name not in data.NESTED and raw is not None:
                values.setdefault(section, {})[f.name] = raw
    return data.config_from_mapping(values)


def cmd_run(args) -> None:
    graph = data.load_dataset(args.data)
    part = _load_partition(args, graph)
    cfg = _config(args)
    records = run_federation(part, cfg, args.out, workers=args.workers,
                             write_aggregation=args.write_aggregation)
    last = records[-1]
    print(f"{cfg.strategy}: round {last.round} global test accuracy {last.global_accuracy:.4f}")
    if args.out:
        Path(args.out, "config.ini").write_text(data.config_to_ini(cfg))


def cmd_eval(args) -> None:
    graph = data.load_dataset(args.data)
    part = data.load_assignment(graph, args.assignment)
    cfg = _config(args)
    fed = Federation(part, cfg)
    wdir = Path(args.weights)
    weights = [LinearModelWeights.load(wdir / f"client_{i:04d}.bin") for i in range(part.num_clients)]
    mask = "val_mask" if args.split == "val" else "test_mask"
    acc = global_test_accuracy(weights, fed.features, fed.labels, [getattr(g, mask) for g in fed.graphs])
    print(f"global {args.split} accuracy {acc:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedgta", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sbm", help="generate a synthetic stochastic block model dataset")
    p.add_argument("--out", required=True)
    _add_dataclass_flags(p, data.SbmSpec)
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("partition", help="split a dataset into clients")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("louvain", "metis"), default="louvain")
    p.add_argument("--clients", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    def add_run_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--assignment", help="node_id,client_id CSV from the partition command")
        p.add_argument("--method", choices=("louvain", "metis"), default="louvain")
        p.add_argument("--clients", type=int, default=10)
        p.add_argument("--partition-seed", type=int, default=0)
        p.add_argument("--config", help="INI file; flags below override it")
        for cls in data.SECTIONS.values():
            _add_dataclass_flags(p, cls, skip=data.NESTED)

    p = sub.add_parser("run", help="run a federation and write rounds.csv and weights")
    add_run_flags(p)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--write-aggregation", action="store_true",
                   help="write per-round similarity/membership/weight matrices (fedgta)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score saved per-client weights")
    add_run_flags(p)
    p.add_argument("--weights", required=True, help="directory of client_XXXX.bin files")
    p.add_argument("--split", choices=("test", "val"), default="test")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

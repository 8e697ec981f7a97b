"""Command line interface: data generation, sharding, learning, evaluation,
and the standalone worker process."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channels import DEFAULT_TIMEOUT, connect_workers, local_channels, parse_address
from .datagen import GenSpec, generate, shard_split
from .driver import LearnConfig, darls, save_result, save_trace_csv
from .engine import WorkerPool
from .graphs import edges_to_support, load_edge_list, save_edge_list, structure_metrics
from .model import load_shard_csv, save_shard_csv
from .worker import serve_worker


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_generate(args) -> int:
    spec = GenSpec.from_dict(_load_json(args.spec))
    data, support, _ = generate(spec)
    save_shard_csv(args.out, data)
    save_edge_list(args.truth, support, header=f"p = {spec.p}")
    print(f"wrote {data.shape[0]} x {data.shape[1]} observations to {args.out}, "
          f"{int(support.sum())} true edges to {args.truth}")
    return 0


def cmd_shard(args) -> int:
    data = load_shard_csv(args.in_path)
    rng = np.random.default_rng(args.seed)
    shards = shard_split(data, args.k, rng)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx, shard in enumerate(shards):
        save_shard_csv(out_dir / f"shard_{idx:03d}.csv", shard)
    print(f"wrote {len(shards)} shards to {out_dir} "
          f"(sizes {[s.shape[0] for s in shards]})")
    return 0


def _load_config(path) -> LearnConfig:
    if path is None:
        return LearnConfig()
    return LearnConfig.from_dict(_load_json(path))


def cmd_learn(args) -> int:
    cfg = _load_config(args.config)
    if args.workers:
        channels = connect_workers(args.workers.split(","), timeout=args.timeout)
    else:
        paths = sorted(Path(args.local).glob("*.csv"))
        if not paths:
            print(f"no shard CSVs found in {args.local}", file=sys.stderr)
            return 2
        channels = local_channels([load_shard_csv(p) for p in paths], cfg.family)
    with WorkerPool(channels, cfg.family) as pool:
        result = darls(pool, cfg)
    save_result(args.out, result)
    save_trace_csv(Path(args.out).with_suffix(".trace.csv"), result.trace)
    print(f"lambda={result.lambda_selected:.5f} objective={result.objective:.6f} "
          f"edges={int(result.support.sum())} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    result = _load_json(args.result)
    p = result["p"]
    estimated = edges_to_support([(i, j) for i, j, *_ in result["edges"]], p)
    truth = edges_to_support(load_edge_list(args.truth), p)
    metrics = structure_metrics(estimated, truth)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    if args.out:
        prefix = Path(args.out)
        with open(prefix.with_suffix(".json"), "w") as fh:
            json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(prefix.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["P", "TP", "FP", "M", "R", "SHD"])
            writer.writerow([metrics.p, metrics.tp, metrics.fp,
                             metrics.m, metrics.r, metrics.shd])
    return 0


def cmd_worker(args) -> int:
    host, port = parse_address(args.listen)
    data = load_shard_csv(args.shard)

    def announce(bound_host, bound_port):
        print(f"listening {bound_host} {bound_port}", flush=True)

    serve_worker(data, args.family, host, port, on_listening=announce)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darls",
                                     description="Distributed DAG structure learning")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate a dataset from a random DAG")
    gen.add_argument("--spec", required=True, help="JSON generation spec")
    gen.add_argument("--out", required=True, help="output data CSV")
    gen.add_argument("--truth", required=True, help="output true edge list")
    gen.set_defaults(func=cmd_generate)

    shard = sub.add_parser("shard", help="split a data CSV into worker shards")
    shard.add_argument("--in", dest="in_path", required=True, help="input data CSV")
    shard.add_argument("--k", type=int, required=True, help="number of shards")
    shard.add_argument("--seed", type=int, default=0, help="partition seed")
    shard.add_argument("--out-dir", required=True, help="shard output directory")
    shard.set_defaults(func=cmd_shard)

    learn = sub.add_parser("learn", help="run the annealed structure search")
    target = learn.add_mutually_exclusive_group(required=True)
    target.add_argument("--workers", help="comma-separated worker host:port list")
    target.add_argument("--local", help="directory of shard CSVs for in-process workers")
    learn.add_argument("--config", help="JSON learn configuration (defaults if omitted)")
    learn.add_argument("--out", required=True, help="result JSON path")
    learn.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT,
                       help="per-request worker timeout in seconds")
    learn.set_defaults(func=cmd_learn)

    ev = sub.add_parser("evaluate", help="compare a result against a true edge list")
    ev.add_argument("--result", required=True, help="result JSON from learn")
    ev.add_argument("--truth", required=True, help="true edge list file")
    ev.add_argument("--out", help="prefix for metrics .json/.csv files")
    ev.set_defaults(func=cmd_evaluate)

    worker = sub.add_parser("worker", help="serve one shard to a coordinator")
    worker.add_argument("--listen", required=True, help="host:port to bind (port 0 = any)")
    worker.add_argument("--shard", required=True, help="shard CSV to serve")
    worker.add_argument("--family", required=True,
                        choices=["gaussian", "logistic", "poisson"])
    worker.set_defaults(func=cmd_worker)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

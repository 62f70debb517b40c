"""Command-line entry point.

Exit codes: 0 success, 2 bad usage (argparse), 3 unreadable input, 4 invalid
configuration or document, 5 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from collections import Counter
from pathlib import Path
from typing import Sequence

from .engine import EngineError, EpisodeConfig, Network, StableSubgraph, restore, retrieve_sample, snapshot, store_sample
from .experiments import VOLATILE_COLUMNS, ConfigError, ExperimentConfig, preset, records_to_csv, run_experiment, sidecar
from .graph import GENERATOR_KINDS, GeneratorSpec, GraphError, generate, graph_to_dict
from .metrics import score_retrieval
from .node_core import DEFAULT_CAPACITY

log = logging.getLogger("engramnet")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INVALID = 4
EXIT_RUNTIME = 5

OUTPUT_DIR_ENV = "ENGRAMNET_OUTPUT_DIR"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_INPUT) from exc


def _read_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path} is not valid JSON: {exc}", EXIT_INVALID) from exc


def _load_net(path: str) -> Network:
    text = _read_text(path)
    try:
        return restore(text)
    except EngineError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INVALID) from exc


def _node_list(args, what: str) -> list[int]:
    if getattr(args, "nodes", None):
        try:
            return [int(x) for x in args.nodes.split(",") if x.strip()]
        except ValueError as exc:
            raise CliError(f"--nodes must be comma-separated integers: {exc}", EXIT_INVALID) from exc
    path = getattr(args, what, None)
    if not path:
        raise CliError(f"give --{what} FILE or --nodes LIST", EXIT_USAGE)
    doc = _read_json(path)
    if isinstance(doc, dict):
        doc = doc.get("nodes")
    if not isinstance(doc, list) or not all(isinstance(x, int) for x in doc):
        raise CliError(f"{path}: expected a list of node ids or {{\"nodes\": [...]}}", EXIT_INVALID)
    return doc


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(args, text: str) -> None:
    if getattr(args, "output", None):
        write_atomic(Path(args.output), text)
        log.info("wrote %s", args.output)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    params: dict[str, float] = {}
    if args.p is not None:
        params["p"] = args.p
    if args.L is not None:
        params["L"] = args.L
    if args.q is not None:
        params["q"] = args.q
    if args.m_new is not None:
        params["m_new"] = args.m_new
    spec = GeneratorSpec(args.kind, params, args.seed)
    log.info("seed %d", args.seed)
    try:
        g = generate(spec, args.n)
    except GraphError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    net = Network(g, args.K)
    doc = json.loads(snapshot(net))
    doc["graph"] = graph_to_dict(g, spec)
    _emit(args, json.dumps(doc, separators=(",", ":"), sort_keys=True))
    return EXIT_OK


def _episode_cfg(args) -> EpisodeConfig:
    try:
        return EpisodeConfig(H=args.H, e_out=args.e_out, seed=args.seed)
    except EngineError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc


def cmd_store(args) -> int:
    net = _load_net(args.net)
    nodes = _node_list(args, "sample")
    log.info("seed %d", args.seed)
    try:
        sg = store_sample(net, nodes, _episode_cfg(args))
    except EngineError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    # keep the original graph block so generator metadata survives
    doc = json.loads(snapshot(net))
    doc["graph"] = json.loads(_read_text(args.net))["graph"]
    write_atomic(Path(args.out_net or args.net), json.dumps(doc, separators=(",", ":"), sort_keys=True))
    result = {"seed": args.seed, "sample": sorted(set(nodes)), "subgraph": sg.to_dict()}
    _emit(args, _dump(result))
    return EXIT_OK


def cmd_retrieve(args) -> int:
    net = _load_net(args.net)
    cue = _node_list(args, "cue")
    try:
        sg = retrieve_sample(net, cue, _episode_cfg(args))
    except EngineError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    result = {"cue": sorted(set(cue)), "subgraph": sg.to_dict()}
    if args.stored:
        stored_doc = _read_json(args.stored)
        stored_doc = stored_doc.get("subgraph", stored_doc)
        try:
            stored = StableSubgraph(
                frozenset(stored_doc["active_nodes"]),
                frozenset(tuple(e) for e in stored_doc["edges"]),
                frozenset(stored_doc["isolated_initials"]),
                int(stored_doc["wcc_count"]),
            )
        except (KeyError, TypeError) as exc:
            raise CliError(f"{args.stored}: malformed subgraph document: {exc}", EXIT_INVALID) from exc
        sc = score_retrieval(stored, sg)
        result["accuracy"] = sc.accuracy
        result["completeness"] = sc.completeness
    _emit(args, _dump(result))
    return EXIT_OK


def cmd_inspect(args) -> int:
    net = _load_net(args.net)
    occupancy = [len(t) for t in net.tables]
    distinct = [len(t.outputs()) for t in net.tables]
    doc = {
        "n": net.n,
        "m": net.graph.m,
        "K": net.capacity,
        "occupied_nodes": sum(1 for x in occupancy if x),
        "entries_total": sum(occupancy),
        "occupancy_histogram": {str(k): v for k, v in sorted(Counter(occupancy).items())},
        "distinct_outputs_histogram": {str(k): v for k, v in sorted(Counter(distinct).items())},
        "max_distinct_outputs": max(distinct, default=0),
        "within_K": all(d <= net.capacity for d in distinct),
    }
    _emit(args, _dump(doc))
    return EXIT_OK


def _experiment_config(args, kind: str) -> ExperimentConfig:
    try:
        if args.config:
            doc = _read_json(args.config)
            if not isinstance(doc, dict):
                raise CliError(f"{args.config}: configuration must be a JSON object", EXIT_INVALID)
            doc.setdefault("kind", kind)
            cfg = ExperimentConfig.from_dict(doc)
        elif args.preset:
            cfg = preset(args.preset).replace(kind=kind)
        else:
            cfg = preset("structures") if kind == "structures" else ExperimentConfig(kind=kind)
        if cfg.kind != kind:
            raise CliError(f"configuration kind {cfg.kind!r} does not match subcommand {kind!r}", EXIT_INVALID)
        changes = {}
        if args.seed is not None:
            changes["seeds"] = [args.seed]
        if args.samples is not None:
            changes["samples"] = args.samples
        if args.threads is not None:
            changes["workers"] = args.threads
        if args.retrieval_sample is not None:
            changes["retrieval_sample"] = args.retrieval_sample
        return cfg.replace(**changes) if changes else cfg
    except (ConfigError, GraphError, EngineError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_INVALID) from exc


def cmd_experiment(args) -> int:
    kind = args.command
    cfg = _experiment_config(args, kind)
    out_dir = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
    log.info("%s: seeds %s, output %s", kind, cfg.seeds, out_dir)
    try:
        records = run_experiment(cfg)
    except (ValueError, RuntimeError) as exc:
        raise CliError(f"{kind} failed: {exc}", EXIT_RUNTIME) from exc
    if args.format == "json":
        body = _dump({"records": [{k: v for k, v in r.items() if k not in VOLATILE_COLUMNS} for r in records]})
    else:
        body = records_to_csv(records)
    write_atomic(out_dir / f"{kind}.{args.format}", body)
    write_atomic(out_dir / f"{kind}.config.json", sidecar(cfg, records))
    print(f"{kind}: {len(records)} records -> {out_dir / f'{kind}.{args.format}'} (seeds {cfg.seeds})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="engramnet", description="Subgraph storage in active directed graphs.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more log output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a topology and write an empty network snapshot")
    p.add_argument("--kind", choices=GENERATOR_KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--L", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--m-new", dest="m_new", type=int)
    p.add_argument("--K", type=int, default=DEFAULT_CAPACITY, help="index table capacity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_generate)

    def episode_flags(p):
        p.add_argument("--net", required=True, help="network snapshot")
        p.add_argument("--nodes", help="comma-separated node ids")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--H", type=float, default=0.6)
        p.add_argument("--e-out", dest="e_out", type=int, default=2)
        p.add_argument("-o", "--output", help="result document (default: stdout)")

    p = sub.add_parser("store", help="store one sample; updates the snapshot")
    episode_flags(p)
    p.add_argument("--sample", help="JSON list of initial node ids")
    p.add_argument("--out-net", help="write the updated snapshot here instead of in place")
    p.set_defaults(func=cmd_store)

    p = sub.add_parser("retrieve", help="retrieve from a cue; the snapshot is not modified")
    episode_flags(p)
    p.add_argument("--cue", help="JSON list of cue node ids")
    p.add_argument("--stored", help="stored-subgraph document to score against")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("inspect", help="summarise a snapshot's index tables")
    p.add_argument("--net", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_inspect)

    for name, help_text in (
        ("capacity", "retrieval statistics or a capacity sweep"),
        ("fault", "retrieval with incomplete or noisy cues"),
        ("robustness", "retrieval after node or edge damage"),
        ("structures", "compare the six topologies"),
    ):
        p = sub.add_parser(name, help=help_text)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON experiment configuration")
        src.add_argument("--preset", help="named configuration, e.g. sparse, dense, sparse_desk")
        p.add_argument("--seed", type=int, help="master seed (replaces the configured seed list)")
        p.add_argument("--samples", type=int)
        p.add_argument("--retrieval-sample", dest="retrieval_sample", type=int)
        p.add_argument("--threads", type=int, help="worker processes for independent grid points")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-o", "--output-dir", dest="output_dir", help=f"default: ${OUTPUT_DIR_ENV} or .")
        p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"engramnet {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

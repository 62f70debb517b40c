"""Experiment harness: capacity sweeps, cue perturbation, network damage and topology comparison.

Every experiment is a pure function of its :class:`ExperimentConfig`. Randomness is
derived from each master seed with :func:`derive_seed`, so a rerun reproduces the
same records byte for byte, whether grid points run in one process or several.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .engine import EpisodeConfig, Mode, Network, StableSubgraph, retrieve_sample, store_sample
from .graph import (
    GENERATOR_KINDS,
    DirectedGraph,
    GeneratorSpec,
    average_path_length,
    clustering_coefficient,
    generate,
)
from .metrics import (
    CapacityThresholds,
    reliable_capacity,
    representation_quality,
    score_retrieval,
    simple_capacity_bound,
)
from .node_core import ActivationTrace, IndexTable, enforce_capacity

log = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("capacity", "fault", "robustness", "structures")
FAULT_MODES = ("missing", "noise", "mixed")
DAMAGE_TARGETS = ("nodes", "edges")
DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(10))

SEED_MIXING = "numpy.random.SeedSequence(entropy=master, spawn_key=keys).generate_state(2, uint32) as one 64-bit int"

# stream identifiers for derive_seed
_GRAPH, _SAMPLE, _STORE, _CUE, _DAMAGE = range(5)


class ConfigError(ValueError):
    """Experiment configuration failed validation."""


class RestorationScheme(str, Enum):
    MAINTAIN = "maintain"
    UNION = "union"
    INTERSECTION = "intersection"
    HIGHEST_FREQUENCY = "highest_frequency"


SCHEMES = tuple(s.value for s in RestorationScheme)


def derive_seed(master: int, *keys: int) -> int:
    """Mix ``master`` with a path of integer keys into an independent 64-bit seed."""
    ss = np.random.SeedSequence(entropy=int(master) & (2**128 - 1), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    kind: str = "capacity"
    generator: dict = field(default_factory=lambda: {"kind": "er", "params": {"p": 3101 / (500 * 499)}})
    n: int = 500
    s: int = 15
    samples: int = 1000
    K: int = 20
    engine: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    # fault / robustness grid of fractions
    grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    # capacity: optional sweep of ER edge probabilities; empty means one fixed network
    p_grid: list = field(default_factory=list)
    q_threshold: float | None = 0.9
    accuracy_threshold: float = 0.9
    completeness_threshold: float = 0.9
    capacity_stride: int = 1
    capacity_max_samples: int | None = None
    # stored samples retrieved per grid point (None = all)
    retrieval_sample: int | None = None
    fault_modes: list = field(default_factory=lambda: list(FAULT_MODES))
    damage_targets: list = field(default_factory=lambda: list(DAMAGE_TARGETS))
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    structures: list = field(default_factory=list)
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {self.kind!r}")
        for name in ("n", "s", "K"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < (0 if name == "K" else 1):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        _generator_spec(self.generator, 0, self.n)
        if self.s > self.n:
            raise ConfigError(f"sample scale s={self.s} exceeds n={self.n}")
        if not isinstance(self.samples, int) or self.samples < 0:
            raise ConfigError(f"samples must be a non-negative integer, got {self.samples!r}")
        if not self.seeds or not all(isinstance(x, int) for x in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        for f in self.grid:
            if not 0.0 <= f <= 1.0:
                raise ConfigError(f"grid fractions must lie in [0, 1], got {f}")
        for p in self.p_grid:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p_grid values must lie in [0, 1], got {p}")
        if self.q_threshold is not None and not 0.0 <= self.q_threshold <= 1.0:
            raise ConfigError(f"q_threshold must lie in [0, 1], got {self.q_threshold}")
        for name in ("accuracy_threshold", "completeness_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.capacity_stride < 1:
            raise ConfigError("capacity_stride must be at least 1")
        if self.retrieval_sample is not None and self.retrieval_sample < 1:
            raise ConfigError("retrieval_sample must be positive")
        bad = set(self.fault_modes) - set(FAULT_MODES)
        if bad:
            raise ConfigError(f"unknown fault modes {sorted(bad)}")
        bad = set(self.damage_targets) - set(DAMAGE_TARGETS)
        if bad:
            raise ConfigError(f"unknown damage targets {sorted(bad)}")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ConfigError(f"unknown restoration schemes {sorted(bad)}")
        for g in self.structures:
            _generator_spec(g, 0, self.n)
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.episode()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad engine settings: {exc}") from exc

    def episode(self) -> EpisodeConfig:
        known = {f.name for f in fields(EpisodeConfig)}
        unknown = set(self.engine) - known
        if unknown:
            raise ConfigError(f"unknown engine settings {sorted(unknown)}")
        values = dict(self.engine)
        if "mode" in values:
            values["mode"] = Mode(values["mode"])
        return EpisodeConfig(**values)

    def thresholds(self) -> CapacityThresholds:
        return CapacityThresholds(self.q_threshold, self.accuracy_threshold, self.completeness_threshold)

    def to_dict(self) -> dict:
        """Resolved configuration, engine defaults included."""
        d = asdict(self)
        eng = asdict(self.episode())
        eng["mode"] = eng["mode"].value
        d["engine"] = eng
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        try:
            return cls(**dict(doc))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)


def _generator_spec(doc: Mapping, seed: int, n: int | None = None) -> GeneratorSpec:
    if not isinstance(doc, Mapping) or doc.get("kind") not in GENERATOR_KINDS:
        raise ConfigError(f"generator must be an object with kind in {GENERATOR_KINDS}, got {doc!r}")
    spec = GeneratorSpec(doc["kind"], dict(doc.get("params", {})), seed)
    try:
        spec.resolved_params() if n is None else spec.validate(n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


SPARSE_P = 3101 / (500 * 499)
DENSE_P = 12606 / (500 * 499)


def preset(name: str) -> ExperimentConfig:
    """Named configurations; ``*_desk`` variants are scaled down to finish in minutes."""
    er = lambda p: {"kind": "er", "params": {"p": p}}  # noqa: E731
    presets = {
        "sparse": dict(generator=er(SPARSE_P), n=500, s=15, samples=1000),
        "dense": dict(generator=er(DENSE_P), n=500, s=60, samples=1000),
        "sparse_desk": dict(generator=er(6.2 / 199), n=200, s=15, samples=200),
        "dense_desk": dict(generator=er(25.3 / 199), n=200, s=60, samples=200),
        "edge_sweep": dict(
            generator=er(0.04), n=500, s=60, samples=0,
            p_grid=[0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.10, 0.12],
            capacity_stride=10, capacity_max_samples=3000,
        ),
        "structures": dict(
            kind="structures", n=1000, s=60, samples=0, capacity_stride=10, capacity_max_samples=8000,
            structures=[
                {"kind": "er", "params": {"p": 6070 / 999000}},
                {"kind": "global"},
                {"kind": "ring", "params": {"L": 3}},
                {"kind": "star"},
                {"kind": "price", "params": {"m_new": 6}},
                {"kind": "kleinberg", "params": {"L": 3, "q": 1}},
            ],
        ),
    }
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(presets)}")
    return ExperimentConfig(**presets[name])


# ---------------------------------------------------------------------------
# shared building blocks


def build_network(cfg: ExperimentConfig, seed: int, generator: Mapping | None = None) -> Network:
    spec = _generator_spec(generator or cfg.generator, derive_seed(seed, _GRAPH))
    return Network(generate(spec, cfg.n), cfg.K)


def sample_stream(n: int, s: int, seed: int, count: int | None = None) -> Iterator[tuple[list[int], int]]:
    """Yield ``(initial_nodes, store_seed)`` pairs; sample i depends only on (seed, i)."""
    i = 0
    while count is None or i < count:
        rng = np.random.default_rng(derive_seed(seed, _SAMPLE, i))
        nodes = sorted(int(x) for x in rng.choice(n, size=s, replace=False))
        yield nodes, derive_seed(seed, _STORE, i)
        i += 1


@dataclass
class LoadedNetwork:
    network: Network
    samples: list[frozenset[int]]
    subgraphs: list[StableSubgraph]


def load_network(cfg: ExperimentConfig, seed: int, generator: Mapping | None = None) -> LoadedNetwork:
    """Build a network and store ``cfg.samples`` samples into it."""
    net = build_network(cfg, seed, generator)
    ep = cfg.episode()
    samples, subgraphs = [], []
    for nodes, store_seed in sample_stream(cfg.n, cfg.s, seed, cfg.samples):
        cue = frozenset(nodes)
        subgraphs.append(store_sample(net, cue, ep.with_(seed=store_seed)))
        samples.append(cue)
    return LoadedNetwork(net, samples, subgraphs)


def _retrieval_indices(cfg: ExperimentConfig, total: int, seed: int) -> list[int]:
    if cfg.retrieval_sample is None or cfg.retrieval_sample >= total:
        return list(range(total))
    rng = random.Random(derive_seed(seed, _CUE, 10**6))
    return sorted(rng.sample(range(total), cfg.retrieval_sample))


def _mean(xs: Sequence[float]) -> float:
    return float(np.mean(xs)) if len(xs) else float("nan")


def _std(xs: Sequence[float]) -> float:
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


def _map(fn: Callable, tasks: Sequence, workers: int) -> list:
    """Run ``fn`` over ``tasks``; results come back in task order either way."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# capacity


def run_capacity(cfg: ExperimentConfig) -> list[dict]:
    """Fixed-network retrieval statistics, or a reliable-capacity sweep over ``p_grid``."""
    if cfg.p_grid:
        tasks = [(cfg, seed, p) for seed in cfg.seeds for p in cfg.p_grid]
        return sorted(_map(_capacity_point, tasks, cfg.workers), key=lambda r: (r["seed"], r["p"]))
    tasks = [(cfg, seed) for seed in cfg.seeds]
    return sorted(_map(_capacity_fixed, tasks, cfg.workers), key=lambda r: r["seed"])


def _capacity_fixed(task) -> dict:
    cfg, seed = task
    t0 = time.perf_counter()
    loaded = load_network(cfg, seed)
    ep = cfg.episode()
    P, C = [], []
    for i in _retrieval_indices(cfg, len(loaded.samples), seed):
        sc = score_retrieval(loaded.subgraphs[i], retrieve_sample(loaded.network, loaded.samples[i], ep))
        P.append(sc.accuracy)
        C.append(sc.completeness)
    sgs = loaded.subgraphs
    return {
        "seed": seed,
        "n": cfg.n,
        "m": loaded.network.graph.m,
        "s": cfg.s,
        "samples": len(sgs),
        "mean_accuracy": _mean(P),
        "std_accuracy": _std(P),
        "mean_completeness": _mean(C),
        "std_completeness": _std(C),
        "mean_Q": _mean([representation_quality(sg, cfg.s) for sg in sgs]),
        "mean_nodes": _mean([len(sg.active_nodes) for sg in sgs]),
        "mean_edges": _mean([len(sg.edges) for sg in sgs]),
        "mean_wcc": _mean([sg.wcc_count for sg in sgs]),
        "mean_communication_nodes": _mean([sg.communication_nodes for sg in sgs]),
        "runtime_s": round(time.perf_counter() - t0, 3),
    }


def _capacity_point(task) -> dict:
    cfg, seed, p = task
    t0 = time.perf_counter()
    gen = {"kind": "er", "params": {"p": p}}
    net = build_network(cfg, seed, gen)
    report = reliable_capacity(
        net.copy,
        sample_stream(cfg.n, cfg.s, seed),
        cfg.episode(),
        cfg.thresholds(),
        stride=cfg.capacity_stride,
        max_samples=cfg.capacity_max_samples,
    )
    c_bar = report.mean_communication_nodes
    return {
        "seed": seed,
        "p": p,
        "n": cfg.n,
        "m": net.graph.m,
        "s": cfg.s,
        "capacity": report.T,
        "stored": report.stored,
        "mean_accuracy": report.mean_accuracy,
        "mean_completeness": report.mean_completeness,
        "mean_communication_nodes": c_bar,
        "simple_bound": simple_capacity_bound(cfg.n, cfg.K, cfg.s, c_bar),
        "runtime_s": round(time.perf_counter() - t0, 3),
    }


# ---------------------------------------------------------------------------
# fault tolerance


def perturb_cue(
    sample: Iterable[int],
    missing_fraction: float,
    noise_fraction: float,
    universe: int,
    rng: random.Random,
) -> frozenset[int]:
    """Drop floor(missing*|S|) members of ``sample``, then add floor(noise*|S|) non-members."""
    if not 0.0 <= missing_fraction <= 1.0 or not 0.0 <= noise_fraction <= 1.0:
        raise ValueError("fractions must lie in [0, 1]")
    members = sorted(set(sample))
    k_drop = math.floor(missing_fraction * len(members))
    k_add = math.floor(noise_fraction * len(members))
    dropped = set(rng.sample(members, k_drop)) if k_drop else set()
    kept = [v for v in members if v not in dropped]
    if k_add:
        pool = sorted(set(range(universe)) - set(members))
        if k_add > len(pool):
            raise ValueError(f"cannot add {k_add} noise nodes: only {len(pool)} non-members in a universe of {universe}")
        kept += rng.sample(pool, k_add)
    return frozenset(kept)


def _fault_fractions(mode: str, f: float) -> tuple[float, float]:
    if mode == "missing":
        return f, 0.0
    if mode == "noise":
        return 0.0, f
    # mixed: replace the removed members by the same number of noise nodes
    return f, f


def run_fault_tolerance(cfg: ExperimentConfig) -> list[dict]:
    tasks = [(cfg, seed) for seed in cfg.seeds]
    out = [r for rows in _map(_fault_seed, tasks, cfg.workers) for r in rows]
    return sorted(out, key=lambda r: (r["seed"], FAULT_MODES.index(r["mode"]), r["fraction"]))


def _fault_seed(task) -> list[dict]:
    cfg, seed = task
    loaded = load_network(cfg, seed)
    ep = cfg.episode()
    idx = _retrieval_indices(cfg, len(loaded.samples), seed)
    rows = []
    for mode in cfg.fault_modes:
        for f in cfg.grid:
            missing, noise = _fault_fractions(mode, f)
            P, C = [], []
            for i in idx:
                # the same per-sample stream for every mode, so mixed drops what missing-only drops
                rng = random.Random(derive_seed(seed, _CUE, i))
                cue = perturb_cue(loaded.samples[i], missing, noise, cfg.n, rng)
                sc = score_retrieval(loaded.subgraphs[i], retrieve_sample(loaded.network, cue, ep))
                P.append(sc.accuracy)
                C.append(sc.completeness)
            rows.append({
                "seed": seed, "mode": mode, "fraction": f,
                "mean_accuracy": _mean(P), "std_accuracy": _std(P),
                "mean_completeness": _mean(C), "std_completeness": _std(C),
                "retrievals": len(idx),
            })
    return rows


# ---------------------------------------------------------------------------
# damage and restoration


@dataclass
class DamagedNetwork:
    network: Network
    removed_nodes: frozenset[int]
    removed_edges: frozenset[tuple[int, int]]


def damage_network(
    net: Network,
    target: str,
    fraction: float,
    scheme: str | RestorationScheme,
    rng: random.Random,
) -> DamagedNetwork:
    """Delete a uniform random fraction of nodes or edges from a copy of ``net`` and repair its tables."""
    if target not in DAMAGE_TARGETS:
        raise ValueError(f"target must be one of {DAMAGE_TARGETS}, got {target!r}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    scheme = RestorationScheme(scheme)
    g = net.graph
    if target == "nodes":
        dead_nodes = frozenset(rng.sample(range(g.n), math.floor(fraction * g.n)))
        dead_edges = frozenset((u, v) for u, v in g.edges() if u in dead_nodes or v in dead_nodes)
        graph = g.without(nodes=dead_nodes)
    else:
        all_edges = g.edges()
        dead_nodes = frozenset()
        dead_edges = frozenset(rng.sample(all_edges, math.floor(fraction * len(all_edges))))
        graph = g.without(edges=dead_edges)
    tables = [t.copy() for t in net.tables]
    if scheme is not RestorationScheme.MAINTAIN:
        lost_out: dict[int, set[int]] = {}
        lost_in: dict[int, set[int]] = {}
        for u, v in dead_edges:
            lost_out.setdefault(u, set()).add(v)
            lost_in.setdefault(v, set()).add(u)
        for v, t in enumerate(tables):
            if v in dead_nodes:
                t.clear()
            elif v in lost_out or v in lost_in:
                restore_table(t, lost_in.get(v, set()), lost_out.get(v, set()), scheme)
    return DamagedNetwork(Network(graph, net.capacity, tables), dead_nodes, dead_edges)


def restore_table(table: IndexTable, gone_in: set[int], gone_out: set[int], scheme: RestorationScheme) -> None:
    """Strip vanished neighbours from every trace and resolve the fan-in collisions this creates."""
    groups: dict[frozenset[int], list[ActivationTrace]] = {}
    for e in table.entries:
        fan_in = e.fan_in - gone_in
        if e.fan_in and not fan_in:
            # nothing upstream can trigger this trace any more
            continue
        groups.setdefault(fan_in, []).append(ActivationTrace(fan_in, e.fan_out - gone_out, e.strength))
    merged = []
    for fan_in, entries in groups.items():
        if len(entries) == 1:
            out, strength = entries[0].fan_out, entries[0].strength
        elif scheme is RestorationScheme.UNION:
            out = frozenset().union(*(e.fan_out for e in entries))
            strength = sum(e.strength for e in entries)
        elif scheme is RestorationScheme.INTERSECTION:
            out = frozenset.intersection(*(e.fan_out for e in entries))
            strength = sum(e.strength for e in entries)
        else:
            # max keeps the earliest entry on ties
            best = max(entries, key=lambda e: e.strength)
            out, strength = best.fan_out, best.strength
        if out:
            merged.append(ActivationTrace(fan_in, out, strength))
    table.replace_entries(merged)
    enforce_capacity(table)


def run_robustness(cfg: ExperimentConfig) -> list[dict]:
    tasks = [(cfg, seed) for seed in cfg.seeds]
    out = [r for rows in _map(_robustness_seed, tasks, cfg.workers) for r in rows]
    return sorted(out, key=lambda r: (r["seed"], r["target"], r["fraction"], SCHEMES.index(r["scheme"])))


def _robustness_seed(task) -> list[dict]:
    cfg, seed = task
    loaded = load_network(cfg, seed)
    ep = cfg.episode()
    idx = _retrieval_indices(cfg, len(loaded.samples), seed)
    rows = []
    for ti, target in enumerate(cfg.damage_targets):
        for fi, f in enumerate(cfg.grid):
            for scheme in cfg.schemes:
                # every scheme sees the same damage at a given (target, fraction)
                rng = random.Random(derive_seed(seed, _DAMAGE, DAMAGE_TARGETS.index(target), fi))
                dmg = damage_network(loaded.network, target, f, scheme, rng)
                P, C = [], []
                for i in idx:
                    cue = loaded.samples[i] - dmg.removed_nodes
                    sc = score_retrieval(loaded.subgraphs[i], retrieve_sample(dmg.network, cue, ep))
                    P.append(sc.accuracy)
                    C.append(sc.completeness)
                rows.append({
                    "seed": seed, "target": target, "fraction": f, "scheme": scheme,
                    "mean_accuracy": _mean(P), "std_accuracy": _std(P),
                    "mean_completeness": _mean(C), "std_completeness": _std(C),
                    "retrievals": len(idx),
                })
    return rows


# ---------------------------------------------------------------------------
# topologies


def run_structures(cfg: ExperimentConfig) -> list[dict]:
    gens = cfg.structures or preset("structures").structures
    tasks = [(cfg, seed, g) for seed in cfg.seeds for g in gens]
    rows = _map(_structure_point, tasks, cfg.workers)
    return sorted(rows, key=lambda r: (r["seed"], r["topology"]))


def structure_metrics(g: DirectedGraph) -> dict:
    return {
        "m": g.m,
        "clustering": clustering_coefficient(g),
        "path_length": average_path_length(g),
    }


def _structure_point(task) -> dict:
    cfg, seed, gen = task
    t0 = time.perf_counter()
    net = build_network(cfg, seed, gen)
    row = {"seed": seed, "topology": gen["kind"], "n": cfg.n, "s": cfg.s}
    row.update(structure_metrics(net.graph))
    report, subgraphs = _capacity_with_subgraphs(cfg, seed, net)
    kept = subgraphs[: report.T] if report.T else []
    row.update({
        "capacity": report.T,
        "stored": report.stored,
        "mean_nodes": _mean([len(sg.active_nodes) for sg in kept]) if kept else 0.0,
        "mean_edges": _mean([len(sg.edges) for sg in kept]) if kept else 0.0,
        "mean_wcc": _mean([sg.wcc_count for sg in kept]) if kept else 0.0,
        "runtime_s": round(time.perf_counter() - t0, 3),
    })
    return row


def _capacity_with_subgraphs(cfg: ExperimentConfig, seed: int, net: Network):
    subgraphs: list[StableSubgraph] = []
    report = reliable_capacity(
        net.copy,
        sample_stream(cfg.n, cfg.s, seed),
        cfg.episode(),
        cfg.thresholds(),
        stride=cfg.capacity_stride,
        max_samples=cfg.capacity_max_samples,
        on_store=lambda i, sg: subgraphs.append(sg),
    )
    return report, subgraphs


# ---------------------------------------------------------------------------
# output


RUNNERS: dict[str, Callable[[ExperimentConfig], list[dict]]] = {
    "capacity": run_capacity,
    "fault": run_fault_tolerance,
    "robustness": run_robustness,
    "structures": run_structures,
}


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    return RUNNERS[cfg.kind](cfg)


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return f"{v:.6f}"
    return str(v)


# wall-clock columns differ between identical runs, so they stay out of the CSV
VOLATILE_COLUMNS = ("runtime_s",)


def records_to_csv(records: Sequence[Mapping]) -> str:
    if not records:
        return ""
    header = [k for k in records[0].keys() if k not in VOLATILE_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in records:
        w.writerow([_fmt(r.get(k, "")) for k in header])
    return buf.getvalue()


def sidecar(cfg: ExperimentConfig, records: Sequence[Mapping] = ()) -> str:
    doc = {"config": cfg.to_dict(), "seeds": list(cfg.seeds), "seed_mixing": SEED_MIXING}
    runtimes = [r["runtime_s"] for r in records if "runtime_s" in r]
    if runtimes:
        doc["runtime_s"] = runtimes
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


__all__ = [
    "ConfigError",
    "DamagedNetwork",
    "ExperimentConfig",
    "LoadedNetwork",
    "RestorationScheme",
    "build_network",
    "damage_network",
    "derive_seed",
    "load_network",
    "perturb_cue",
    "preset",
    "records_to_csv",
    "restore_table",
    "run_capacity",
    "run_experiment",
    "run_fault_tolerance",
    "run_robustness",
    "run_structures",
    "sample_stream",
    "sidecar",
    "structure_metrics",
]

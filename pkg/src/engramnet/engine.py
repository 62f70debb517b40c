"""Tick-synchronous storage and retrieval episodes on an active directed graph.

A node is a resource that at most one upstream node may own at a time. Storing a
sample lets the initial nodes spread stimulus until the set of active nodes stops
changing, then every active node remembers its (fan-in -> fan-out) pairing.
Retrieval replays remembered pairings only and never touches the tables.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

from .graph import DirectedGraph, GraphError, graph_from_dict, graph_to_dict, weakly_connected_components
from .node_core import (
    DEFAULT_CAPACITY,
    DEFAULT_MERGE_THRESHOLD,
    DEFAULT_SIMILARITY_THRESHOLD,
    EMPTY,
    ActivationTrace,
    IndexTable,
    lookup,
    record_trace,
    select_fanout,
)

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


class EngineError(ValueError):
    """Invalid episode input or malformed network snapshot."""


class NodeState(str, Enum):
    RESTING = "resting"
    ACTIVE = "active"
    DORMANT = "dormant"


class Mode(str, Enum):
    STORE = "store"
    RETRIEVE = "retrieve"


@dataclass(frozen=True)
class EpisodeConfig:
    H: float = 0.6
    e_out: int = 2
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD
    repath_limit: int = 3
    mode: Mode = Mode.STORE
    seed: int = 0
    retrieval_uses_H: bool = False
    # during storage, a node whose table matches its input replays without rolling H
    reuse_skips_H: bool = True
    # fresh selection draws from every out-neighbour; occupied picks simply fail
    select_from_all: bool = True
    # which initial nodes that end with no fan-out overwrite their cue trace: "none", "isolated", "all"
    record_empty_initials: str = "none"
    # active initial nodes accept stimulus from any number of upstream nodes
    shared_initials: bool = True
    # an initial node holding a cue trace falls back to a fresh draw when the replay claims nothing
    initial_fresh_fallback: bool = False
    # storage first replays stored traces exactly as retrieval would, then explores
    replay_first: bool = True
    # nodes that lit up and died during replay are skipped by fresh exploration
    refractory: bool = True
    # fresh selection draws only among active initial neighbours when any are reachable
    prefer_active: bool = True
    # during replay (retrieval, or storage's first phase) cues whose paths died fire again
    replay_repaths: bool = True
    # re-pathing first retries the remembered fan-out before drawing a fresh one
    repath_reuses_table: bool = True
    max_ticks: int = 10_000
    max_release_rounds: int = 64

    def __post_init__(self):
        if not 0.0 <= self.H <= 1.0:
            raise EngineError(f"H must lie in [0, 1], got {self.H}")
        if self.e_out < 1:
            raise EngineError(f"e_out must be at least 1, got {self.e_out}")
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise EngineError(f"similarity_threshold must lie in (0, 1], got {self.similarity_threshold}")
        if self.record_empty_initials not in ("none", "isolated", "all"):
            raise EngineError(f"record_empty_initials must be none, isolated or all, got {self.record_empty_initials!r}")
        if self.repath_limit < 0:
            raise EngineError(f"repath_limit must be non-negative, got {self.repath_limit}")

    def with_(self, **changes) -> "EpisodeConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return EpisodeConfig(**values)


@dataclass
class NodeRuntime:
    state: NodeState = NodeState.RESTING
    is_initial: bool = False
    owner: int | None = None
    owned: set[int] = field(default_factory=set)
    current_in: set[int] = field(default_factory=set)
    repath_count: int = 0


@dataclass(frozen=True)
class StableSubgraph:
    active_nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]
    isolated_initials: frozenset[int]
    wcc_count: int
    ticks: int = field(default=0, compare=False)
    # the episode's initial/cue set; not part of equality
    initial_nodes: frozenset[int] = field(default=frozenset(), compare=False)

    @property
    def communication_nodes(self) -> int:
        return len(self.active_nodes - self.initial_nodes)

    def to_dict(self) -> dict:
        return {
            "active_nodes": sorted(self.active_nodes),
            "edges": [list(e) for e in sorted(self.edges)],
            "isolated_initials": sorted(self.isolated_initials),
            "wcc_count": self.wcc_count,
            "ticks": self.ticks,
        }


class Network:
    """A topology plus one index table per node."""

    def __init__(self, graph: DirectedGraph, capacity: int = DEFAULT_CAPACITY, tables: list[IndexTable] | None = None):
        self.graph = graph
        self.capacity = capacity
        if tables is None:
            tables = [IndexTable(capacity) for _ in range(graph.n)]
        if len(tables) != graph.n:
            raise EngineError(f"expected {graph.n} tables, got {len(tables)}")
        self.tables = tables

    @property
    def n(self) -> int:
        return self.graph.n

    def copy(self) -> "Network":
        return Network(self.graph, self.capacity, [t.copy() for t in self.tables])

    def occupancy(self) -> list[int]:
        return [len(t) for t in self.tables]


# ---------------------------------------------------------------------------
# episode machinery


class _Episode:
    """Mutable runtime state for one episode; only touched nodes are materialised."""

    def __init__(self, net: Network, initial: Iterable[int], cfg: EpisodeConfig):
        self.net = net
        self.out_edges = net.graph.out_edges
        self.tables = net.tables
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.store = cfg.mode == Mode.STORE
        self.shared = cfg.shared_initials
        # storage starts in the replay phase when configured; exploring covers the rest
        self.exploring = self.store and not cfg.replay_first
        self.initial: frozenset[int] = frozenset(initial)
        self.state: dict[int, NodeState] = {}
        self.owner: dict[int, int] = {}
        self.owned: dict[int, set[int]] = {}
        self.current_in: dict[int, set[int]] = {}
        self.repath: dict[int, int] = {}
        # resting targets claimed this tick; they roll for activation next tick
        self.pending: dict[int, int] = {}
        # initial nodes that have made their first attempt
        self.attempted: set[int] = set()
        self.decided_in: dict[int, frozenset[int]] = {}
        self.refractory: set[int] = set()
        self.ticks = 0
        self.trace_log: list[str] | None = None
        for u in sorted(self.initial):
            self.state[u] = NodeState.ACTIVE
            self.owned[u] = set()
            self.current_in[u] = set()
            self.repath[u] = 0

    # -- primitive transitions ------------------------------------------------

    def _claimable(self, v: int) -> bool:
        if self.shared and v in self.initial:
            return True
        return v not in self.owner and v not in self.pending

    def _claim(self, u: int, v: int) -> None:
        if v in self.owned[u]:
            return
        if not (self.shared and v in self.initial):
            self.owner[v] = u
        self.owned[u].add(v)
        if self.state.get(v, NodeState.RESTING) is NodeState.RESTING:
            self.pending[v] = u
        else:
            self.current_in[v].add(u)

    def _claim_all(self, u: int, targets: Iterable[int]) -> None:
        has_edge = self.net.graph.has_edge
        for v in sorted(targets):
            if self._claimable(v) and has_edge(u, v):
                self._claim(u, v)

    def _unclaim(self, u: int, v: int) -> None:
        if self.owner.get(v) == u:
            del self.owner[v]
        self.owned[u].discard(v)
        cin = self.current_in.get(v)
        if cin is not None:
            cin.discard(u)

    def _revert(self, v: int) -> None:
        """Return a non-initial node to rest, releasing everything it holds."""
        for w in sorted(self.owned.get(v, ())):
            self._drop_downstream(v, w)
        if self.store and not self.exploring and self.cfg.refractory:
            self.refractory.add(v)
        self.state.pop(v, None)
        self.owned.pop(v, None)
        self.current_in.pop(v, None)
        if v in self.owner:
            u = self.owner.pop(v)
            self.owned[u].discard(v)

    def _drop_downstream(self, u: int, w: int) -> None:
        """``u`` lets go of ``w``: non-initial nodes revert (recursively), initial ones just lose the edge."""
        if w in self.pending:
            del self.pending[w]
            del self.owner[w]
            self.owned[u].discard(w)
            return
        if w in self.initial:
            self._unclaim(u, w)
        else:
            self._revert(w)

    def _cascade(self, seeds: Iterable[int]) -> None:
        """Avalanche: active non-initial nodes owning nothing revert, propagating upstream."""
        work = sorted(set(seeds))
        while work:
            v = work.pop()
            if v in self.initial or self.state.get(v) is not NodeState.ACTIVE or self.owned.get(v):
                continue
            u = self.owner.get(v)
            self._log(f"{v} reverts to resting")
            self._revert(v)
            if u is not None:
                work.append(u)

    def _log(self, msg: str) -> None:
        if self.trace_log is not None:
            self.trace_log.append(f"t{self.ticks}: {msg}")

    # -- decisions ---------------------------------------------------------------

    def _candidates(self, u: int) -> list[int]:
        out = self.out_edges[u]
        if self.refractory:
            out = [v for v in out if v not in self.refractory]
        if self.cfg.select_from_all:
            return list(out)
        return [v for v in out if self._claimable(v)]

    def _fan_in(self, u: int) -> frozenset[int]:
        if u in self.initial:
            # initial nodes are driven by the cue, not by whoever later claims them
            return EMPTY
        return frozenset(self.current_in[u])

    def _decide_store(self, u: int, fresh: bool) -> None:
        table = self.tables[u]
        if not fresh and len(table):
            match = lookup(table, self._fan_in(u), self.cfg.similarity_threshold)
            if match.matched:
                self._claim_all(u, match.fan_out)
                return
        cands = self._candidates(u)
        if self.cfg.prefer_active:
            live = [v for v in cands if v in self.initial and v != u and self.state.get(v) is NodeState.ACTIVE and self._claimable(v)]
            if live:
                cands = live
        chosen = select_fanout(table, cands, self.cfg.e_out, self.rng)
        self._claim_all(u, chosen)

    def _replayable(self, u: int) -> bool:
        return lookup(self.tables[u], self._fan_in(u), self.cfg.similarity_threshold).matched

    def _decide_retrieve(self, u: int) -> None:
        key = self._fan_in(u)
        self.decided_in[u] = key
        match = lookup(self.tables[u], key, self.cfg.similarity_threshold)
        if match.matched:
            self._claim_all(u, match.fan_out)

    # -- ticks -------------------------------------------------------------------

    def _initial_actors(self) -> list[int]:
        actors = []
        for u in self.initial:
            if self.state[u] is not NodeState.ACTIVE or self.owned[u]:
                continue
            if self.exploring or u not in self.attempted or self.decided_in.get(u, EMPTY) != self._fan_in(u):
                actors.append(u)
            elif self.cfg.replay_repaths and self.repath[u] < self.cfg.repath_limit and self._replayable(u):
                actors.append(u)
        return actors

    def quiescent(self) -> bool:
        return not self.pending and not self._initial_actors()

    def tick(self) -> None:
        actors = sorted(set(self.pending) | set(self._initial_actors()))
        self.rng.shuffle(actors)
        touched: list[int] = []
        for x in actors:
            if x in self.pending:
                self._activate_pending(x, touched)
            elif self.exploring:
                self._act_initial_store(x)
            else:
                if x in self.attempted:
                    self.repath[x] += 1
                self.attempted.add(x)
                self._decide_retrieve(x)
        self._cascade(touched)
        self.ticks += 1

    def _activate_pending(self, x: int, touched: list[int]) -> None:
        claimer = self.pending.pop(x)
        match = None
        if self.exploring:
            if self.cfg.reuse_skips_H:
                match = lookup(self.tables[x], frozenset((claimer,)), self.cfg.similarity_threshold)
                ok = match.matched or self.rng.random() < self.cfg.H
            else:
                ok = self.rng.random() < self.cfg.H
        else:
            match = lookup(self.tables[x], frozenset((claimer,)), self.cfg.similarity_threshold)
            ok = match.matched
            if ok and self.cfg.retrieval_uses_H and not self.store:
                ok = self.rng.random() < self.cfg.H
        if not ok:
            self.owner.pop(x)
            self.owned[claimer].discard(x)
            touched.append(claimer)
            return
        self.state[x] = NodeState.ACTIVE
        self.owned[x] = set()
        self.current_in[x] = {claimer}
        self._log(f"{x} activated by {claimer}")
        if self.exploring:
            self._decide_store(x, fresh=False)
        else:
            self._claim_all(x, match.fan_out)
        touched.append(x)

    def _act_initial_store(self, u: int) -> None:
        if u not in self.attempted:
            self.attempted.add(u)
            self._decide_store(u, fresh=False)
            return
        if self.repath[u] >= self.cfg.repath_limit:
            self.state[u] = NodeState.DORMANT
            self._log(f"{u} goes dormant")
            return
        self.repath[u] += 1
        self._log(f"{u} re-paths ({self.repath[u]})")
        self._decide_store(u, fresh=not self.cfg.repath_reuses_table)
        if not self.owned[u] and self.cfg.repath_reuses_table and (
            self.cfg.initial_fresh_fallback or self.tables[u].get(EMPTY) is None
        ):
            self._decide_store(u, fresh=True)

    # -- resource release -----------------------------------------------------

    def dormant(self) -> list[int]:
        return sorted(u for u in self.initial if self.state[u] is NodeState.DORMANT)

    def release_resources(self) -> bool:
        """Each node owning several downstream nodes keeps its best-backed one; dormant nodes wake."""
        released = False
        for u in sorted(self.owned):
            if self.state.get(u) not in (NodeState.ACTIVE, NodeState.DORMANT):
                continue
            owned = self.owned.get(u)
            if not owned or len(owned) <= 1:
                continue
            keep = self._strongest_claim(u, owned)
            for v in sorted(owned - {keep}):
                self._log(f"{u} releases {v}")
                self._drop_downstream(u, v)
                released = True
        for u in self.dormant():
            self.state[u] = NodeState.ACTIVE
            self.repath[u] = 0
        return released

    def _strongest_claim(self, u: int, owned: set[int]) -> int:
        best_strength: dict[int, int] = {v: 0 for v in owned}
        for entry in self.tables[u].entries:
            for v in entry.fan_out:
                if v in best_strength and entry.strength > best_strength[v]:
                    best_strength[v] = entry.strength
        return min(owned, key=lambda v: (-best_strength[v], v))

    # -- results ------------------------------------------------------------------

    def subgraph(self) -> StableSubgraph:
        active = frozenset(v for v, s in self.state.items() if s is not NodeState.RESTING)
        edges = frozenset((u, v) for u in active for v in self.owned.get(u, ()) if v in active)
        touched = {x for e in edges for x in e}
        isolated = frozenset(u for u in self.initial if u not in touched)
        wccs = weakly_connected_components(active - isolated, edges)
        return StableSubgraph(active, edges, isolated, len(wccs), self.ticks, initial_nodes=self.initial)

    def runtime(self) -> dict[int, NodeRuntime]:
        """Per-node runtime view of every touched node (for inspection and tests)."""
        out = {}
        for v in sorted(set(self.state) | set(self.owner) | set(self.pending)):
            out[v] = NodeRuntime(
                state=self.state.get(v, NodeState.RESTING),
                is_initial=v in self.initial,
                owner=self.owner.get(v),
                owned=set(self.owned.get(v, ())),
                current_in=set(self.current_in.get(v, ())),
                repath_count=self.repath.get(v, 0),
            )
        return out

    def signature(self) -> tuple:
        return (
            tuple(sorted((v, s.value) for v, s in self.state.items())),
            tuple(sorted(self.owner.items())),
            tuple(sorted(self.pending.items())),
        )


def _check_nodes(net: Network, nodes: Iterable[int], what: str) -> frozenset[int]:
    nodes = frozenset(nodes)
    bad = sorted(v for v in nodes if not (isinstance(v, int) and 0 <= v < net.n))
    if bad:
        raise EngineError(f"{what} node ids out of range [0, {net.n}): {bad[:10]}")
    return nodes


def _run(ep: _Episode) -> None:
    cfg = ep.cfg
    rounds = 0
    while True:
        while not ep.quiescent():
            if ep.ticks >= cfg.max_ticks:
                log.warning("episode hit max_ticks=%d before stabilising", cfg.max_ticks)
                return
            ep.tick()
        if ep.store and not ep.exploring:
            ep.exploring = True
            # replay was not an exploration attempt; unconnected cues get a first try
            ep.attempted = {u for u in ep.attempted if ep.owned[u]}
            for u in ep.initial:
                ep.repath[u] = 0
            ep._log("replay settled, exploring")
            continue
        if not ep.store or not ep.dormant():
            return
        if rounds >= cfg.max_release_rounds:
            log.warning("episode hit max_release_rounds=%d", cfg.max_release_rounds)
            return
        # nothing to free: stop with dormant nodes left dormant so the end state is a fixed point
        if not _has_releasable(ep):
            return
        woken = ep.dormant()
        ep.release_resources()
        rounds += 1
        ep._log(f"release round {rounds}, woke {woken}")


def _has_releasable(ep: _Episode) -> bool:
    return any(
        len(owned) > 1 and ep.state.get(u) in (NodeState.ACTIVE, NodeState.DORMANT)
        for u, owned in ep.owned.items()
    )


def _consolidate(ep: _Episode) -> None:
    merge = ep.cfg.merge_threshold
    for v in sorted(ep.state):
        if ep.state[v] is NodeState.RESTING:
            continue
        if v in ep.initial and not ep.owned.get(v):
            # a cue that reached nothing would overwrite a path older samples still rely on
            mode = ep.cfg.record_empty_initials
            if mode == "none" or (mode == "isolated" and ep.current_in.get(v)):
                continue
        trace = ActivationTrace(ep._fan_in(v), frozenset(ep.owned.get(v, ())))
        record_trace(ep.tables[v], trace, merge)


def store_sample(
    net: Network,
    initial_nodes: Iterable[int],
    cfg: EpisodeConfig,
    trace_log: list[str] | None = None,
) -> StableSubgraph:
    """Form a stable subgraph from ``initial_nodes`` and consolidate it into the tables."""
    initial = _check_nodes(net, initial_nodes, "initial")
    if not initial:
        raise EngineError("initial node set must be non-empty")
    if cfg.mode != Mode.STORE:
        cfg = cfg.with_(mode=Mode.STORE)
    ep = _Episode(net, initial, cfg)
    ep.trace_log = trace_log
    _run(ep)
    _consolidate(ep)
    return ep.subgraph()


def retrieve_sample(
    net: Network,
    cue_nodes: Iterable[int],
    cfg: EpisodeConfig,
    trace_log: list[str] | None = None,
) -> StableSubgraph:
    """Replay stored traces from ``cue_nodes``; the network is left untouched."""
    cue = _check_nodes(net, cue_nodes, "cue")
    if cfg.mode != Mode.RETRIEVE:
        cfg = cfg.with_(mode=Mode.RETRIEVE)
    ep = _Episode(net, cue, cfg)
    ep.trace_log = trace_log
    _run(ep)
    return ep.subgraph()


def run_episode(net: Network, initial_nodes: Iterable[int], cfg: EpisodeConfig) -> _Episode:
    """Run the propagation stage only and hand back the live episode (no consolidation)."""
    initial = _check_nodes(net, initial_nodes, "initial")
    ep = _Episode(net, initial, cfg)
    _run(ep)
    return ep


# ---------------------------------------------------------------------------
# snapshots


def network_to_dict(net: Network, graph_meta: Callable[[DirectedGraph], dict] | None = None) -> dict:
    graph_doc = graph_meta(net.graph) if graph_meta else graph_to_dict(net.graph)
    tables = []
    for v, t in enumerate(net.tables):
        if not len(t):
            continue
        entries = sorted(
            ([sorted(e.fan_in), sorted(e.fan_out), e.strength] for e in t.entries),
            key=lambda x: (x[0], x[1]),
        )
        tables.append({"node": v, "entries": [{"in": i, "out": o, "strength": s} for i, o, s in entries]})
    return {"version": SNAPSHOT_VERSION, "capacity": net.capacity, "graph": graph_doc, "tables": tables}


def network_from_dict(doc: Mapping) -> Network:
    if not isinstance(doc, Mapping):
        raise EngineError("snapshot must be a JSON object")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise EngineError(f"unsupported snapshot version {doc.get('version')!r} (expected {SNAPSHOT_VERSION})")
    try:
        graph = graph_from_dict(doc["graph"])
        capacity = int(doc.get("capacity", DEFAULT_CAPACITY))
        tables = [IndexTable(capacity) for _ in range(graph.n)]
        for block in doc["tables"]:
            v = int(block["node"])
            if not 0 <= v < graph.n:
                raise EngineError(f"table for node {v} outside [0, {graph.n})")
            entries = [
                ActivationTrace(frozenset(map(int, e["in"])), frozenset(map(int, e["out"])), int(e["strength"]))
                for e in block["entries"]
            ]
            tables[v] = IndexTable(capacity, entries)
    except (KeyError, TypeError, ValueError, GraphError) as exc:
        if isinstance(exc, EngineError):
            raise
        raise EngineError(f"malformed snapshot: {exc}") from exc
    return Network(graph, capacity, tables)


def snapshot(net: Network) -> str:
    """Byte-stable JSON serialisation of topology and tables."""
    return json.dumps(network_to_dict(net), separators=(",", ":"), sort_keys=True)


def restore(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EngineError(f"snapshot is not valid JSON: {exc}") from exc
    return network_from_dict(doc)


__all__ = [
    "EMPTY",
    "EngineError",
    "EpisodeConfig",
    "Mode",
    "Network",
    "NodeRuntime",
    "NodeState",
    "StableSubgraph",
    "network_from_dict",
    "network_to_dict",
    "restore",
    "retrieve_sample",
    "run_episode",
    "snapshot",
    "store_sample",
]

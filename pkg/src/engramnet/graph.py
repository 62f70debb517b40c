"""Directed graph substrate, topology generators and structural metrics."""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

GRAPH_FORMAT_VERSION = 1

GENERATOR_KINDS = ("er", "global", "ring", "star", "kleinberg", "price")


class GraphError(ValueError):
    """Raised for invalid graph parameters or malformed graph documents."""


class DirectedGraph:
    """Immutable directed graph on nodes ``0..n-1`` without self-loops or multi-edges.

    ``out_edges[u]`` and ``in_edges[v]`` are sorted tuples.
    """

    __slots__ = ("n", "out_edges", "in_edges", "m")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise GraphError(f"node count must be non-negative, got {n}")
        out_sets: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) has an endpoint outside [0, {n})")
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            out_sets[u].add(v)
        in_sets: list[list[int]] = [[] for _ in range(n)]
        for u in range(n):
            for v in out_sets[u]:
                in_sets[v].append(u)
        self.n = n
        self.out_edges: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(s)) for s in out_sets)
        self.in_edges: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(s)) for s in in_sets)
        self.m = sum(len(s) for s in self.out_edges)

    def edges(self) -> list[tuple[int, int]]:
        """All edges in lexicographic order."""
        return [(u, v) for u in range(self.n) for v in self.out_edges[u]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.out_edges[u]
        i = _bisect(row, v)
        return i < len(row) and row[i] == v

    def out_degree(self, u: int) -> int:
        return len(self.out_edges[u])

    def in_degree(self, v: int) -> int:
        return len(self.in_edges[v])

    def without(self, nodes: Iterable[int] = (), edges: Iterable[tuple[int, int]] = ()) -> "DirectedGraph":
        """Copy with the given edges and every edge incident to ``nodes`` removed.

        The node count is kept so identifiers stay valid.
        """
        dead_nodes = set(nodes)
        dead_edges = set(edges)
        kept = (
            (u, v)
            for u, v in self.edges()
            if u not in dead_nodes and v not in dead_nodes and (u, v) not in dead_edges
        )
        return DirectedGraph(self.n, kept)

    def adjacency_matrix(self) -> sparse.csr_matrix:
        rows = [u for u in range(self.n) for _ in self.out_edges[u]]
        cols = [v for u in range(self.n) for v in self.out_edges[u]]
        data = np.ones(len(rows), dtype=np.float64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DirectedGraph) and self.n == other.n and self.out_edges == other.out_edges

    def __hash__(self) -> int:
        return hash((self.n, self.out_edges))

    def __repr__(self) -> str:
        return f"DirectedGraph(n={self.n}, m={self.m})"


def _bisect(row: tuple[int, ...], x: int) -> int:
    lo, hi = 0, len(row)
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class GeneratorSpec:
    """Topology family plus its parameters.

    ``params`` keys by kind: er ``p``; ring ``L``; kleinberg ``L`` and ``q``
    (long-range edges per node); price ``m_new``.
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def resolved_params(self) -> dict[str, float]:
        defaults: dict[str, dict[str, float]] = {
            "er": {"p": 0.0},
            "global": {},
            "ring": {"L": 3},
            "star": {},
            "kleinberg": {"L": 3, "q": 1},
            "price": {"m_new": 6},
        }
        if self.kind not in defaults:
            raise GraphError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        out = dict(defaults[self.kind])
        unknown = set(self.params) - set(out)
        if unknown:
            raise GraphError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        out.update(self.params)
        return out

    def validate(self, n: int) -> dict[str, float]:
        params = self.resolved_params()
        if n < 1:
            raise GraphError(f"node count must be positive, got {n}")
        if self.kind == "er":
            p = params["p"]
            if not 0.0 <= p <= 1.0:
                raise GraphError(f"er: p must lie in [0, 1], got {p}")
        elif self.kind in ("ring", "kleinberg"):
            L = params["L"]
            if int(L) != L or not 1 <= L < n / 2:
                raise GraphError(f"{self.kind}: L must be an integer with 1 <= L < n/2, got L={L}, n={n}")
            if self.kind == "kleinberg":
                q = params["q"]
                if int(q) != q or q < 0:
                    raise GraphError(f"kleinberg: q must be a non-negative integer, got {q}")
        elif self.kind == "price":
            m_new = params["m_new"]
            if int(m_new) != m_new or not 1 <= m_new < n:
                raise GraphError(f"price: m_new must be an integer with 1 <= m_new < n, got {m_new}")
        elif self.kind == "star" and n < 2:
            raise GraphError("star: needs at least 2 nodes")
        return params


def generate(spec: GeneratorSpec, n: int) -> DirectedGraph:
    """Build the graph described by ``spec`` on ``n`` nodes; deterministic in ``spec.seed``."""
    params = spec.validate(n)
    rng = random.Random(spec.seed)
    if spec.kind == "er":
        edges = _er_edges(n, params["p"], spec.seed)
    elif spec.kind == "global":
        edges = [(u, v) for u in range(n) for v in range(n) if u != v]
    elif spec.kind == "ring":
        edges = _ring_edges(n, int(params["L"]))
    elif spec.kind == "star":
        edges = [(0, v) for v in range(1, n)] + [(v, 0) for v in range(1, n)]
    elif spec.kind == "kleinberg":
        edges = _ring_edges(n, int(params["L"]))
        edges += _long_range_edges(n, int(params["q"]), rng)
    else:
        edges = _price_edges(n, int(params["m_new"]), rng)
    return DirectedGraph(n, edges)


def _er_edges(n: int, p: float, seed: int) -> list[tuple[int, int]]:
    if p <= 0.0 or n < 2:
        return []
    gen = np.random.default_rng(seed)
    # one Bernoulli(p) per ordered pair, row-major over the off-diagonal
    mask = gen.random((n, n)) < p
    np.fill_diagonal(mask, False)
    us, vs = np.nonzero(mask)
    return list(zip(us.tolist(), vs.tolist()))


def _ring_edges(n: int, L: int) -> list[tuple[int, int]]:
    edges = []
    for u in range(n):
        for k in range(1, L + 1):
            edges.append((u, (u + k) % n))
            edges.append((u, (u - k) % n))
    return edges


def _long_range_edges(n: int, q: int, rng: random.Random) -> list[tuple[int, int]]:
    # Targets uniform over non-self nodes; duplicates of ring edges collapse.
    edges = []
    for u in range(n):
        for _ in range(q):
            v = rng.randrange(n - 1)
            if v >= u:
                v += 1
            edges.append((u, v))
    return edges


def _price_edges(n: int, m_new: int, rng: random.Random) -> list[tuple[int, int]]:
    in_deg = [0] * n
    edges = []
    for u in range(1, n):
        k = min(m_new, u)
        chosen: list[int] = []
        weights = [in_deg[v] + 1 for v in range(u)]
        total = sum(weights)
        for _ in range(k):
            r = rng.random() * total
            acc = 0.0
            pick = u - 1
            for v in range(u):
                w = weights[v]
                if w == 0:
                    continue
                acc += w
                if r < acc:
                    pick = v
                    break
            while weights[pick] == 0:
                pick -= 1
            chosen.append(pick)
            total -= weights[pick]
            weights[pick] = 0
        for v in chosen:
            edges.append((u, v))
            in_deg[v] += 1
    return edges


def average_path_length(g: DirectedGraph) -> float:
    """Harmonic-mean path length ``1/GE`` over ordered pairs; ``inf`` when nothing is reachable."""
    if g.n < 2:
        raise GraphError("average path length needs at least 2 nodes")
    n = g.n
    if g.m == 0:
        return math.inf
    from scipy.sparse.csgraph import shortest_path

    dist = shortest_path(g.adjacency_matrix(), method="D", unweighted=True, directed=True)
    np.fill_diagonal(dist, np.inf)
    inv = np.where(np.isfinite(dist), 1.0 / dist, 0.0)
    efficiency = inv.sum() / (n * (n - 1))
    if efficiency == 0.0:
        return math.inf
    return float(1.0 / efficiency)


def clustering_coefficient(g: DirectedGraph) -> float:
    """Mean Fagiolo (2007) total directed clustering coefficient.

    For node i with total degree d and reciprocated degree r:
    ``C_i = [(A + A^T)^3]_ii / (2 * (d * (d - 1) - 2 * r))``.
    """
    if g.n < 3:
        raise GraphError("clustering coefficient needs at least 3 nodes")
    a = g.adjacency_matrix()
    s = (a + a.T).tocsr()
    s2 = s @ s
    # diag(S^3) = rowsum(S^2 * S) since S is symmetric
    cycles = np.asarray(s2.multiply(s).sum(axis=1)).ravel()
    total_deg = np.asarray(s.sum(axis=1)).ravel()
    recip = np.asarray(a.multiply(a.T).sum(axis=1)).ravel()
    denom = 2.0 * (total_deg * (total_deg - 1.0) - 2.0 * recip)
    coeff = np.zeros(g.n)
    nz = denom > 0
    coeff[nz] = cycles[nz] / denom[nz]
    return float(coeff.mean())


def weakly_connected_components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[frozenset[int]]:
    """Partition ``nodes`` into weakly connected components, ordered by smallest member."""
    node_set = set(nodes)
    adj: dict[int, list[int]] = {u: [] for u in node_set}
    for u, v in edges:
        if u not in node_set or v not in node_set:
            raise GraphError(f"edge ({u}, {v}) has an endpoint outside the node set")
        adj[u].append(v)
        adj[v].append(u)
    seen: set[int] = set()
    components = []
    for start in sorted(node_set):
        if start in seen:
            continue
        seen.add(start)
        comp = [start]
        queue = deque([start])
        while queue:
            x = queue.popleft()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    comp.append(y)
                    queue.append(y)
        components.append(frozenset(comp))
    return components


def er_connectivity_probability(s: int) -> float:
    """``ln(s)/s``: the edge probability above which a G(s, p) is almost surely connected."""
    if s < 2:
        raise GraphError(f"s must be at least 2, got {s}")
    return math.log(s) / s


def is_acyclic(g: DirectedGraph) -> bool:
    indeg = [g.in_degree(v) for v in range(g.n)]
    queue = deque(v for v in range(g.n) if indeg[v] == 0)
    visited = 0
    while queue:
        u = queue.popleft()
        visited += 1
        for v in g.out_edges[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return visited == g.n


def graph_to_dict(g: DirectedGraph, spec: GeneratorSpec | None = None) -> dict:
    return {
        "version": GRAPH_FORMAT_VERSION,
        "n": g.n,
        "kind": spec.kind if spec else None,
        "params": dict(sorted(spec.resolved_params().items())) if spec else {},
        "seed": spec.seed if spec else None,
        "edges": [[u, v] for u, v in g.edges()],
    }


def graph_from_dict(doc: Mapping) -> DirectedGraph:
    if not isinstance(doc, Mapping):
        raise GraphError("graph document must be a JSON object")
    version = doc.get("version")
    if version != GRAPH_FORMAT_VERSION:
        raise GraphError(f"unsupported graph document version {version!r} (expected {GRAPH_FORMAT_VERSION})")
    try:
        n = int(doc["n"])
        edges = [(int(u), int(v)) for u, v in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed graph document: {exc}") from exc
    return DirectedGraph(n, edges)


def dumps_graph(g: DirectedGraph, spec: GeneratorSpec | None = None) -> str:
    return json.dumps(graph_to_dict(g, spec), separators=(",", ":"), sort_keys=True)


def loads_graph(text: str) -> DirectedGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"graph document is not valid JSON: {exc}") from exc
    return graph_from_dict(doc)

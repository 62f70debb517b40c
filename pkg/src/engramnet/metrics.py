"""Retrieval quality, representation quality and capacity measures."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .engine import EpisodeConfig, Network, StableSubgraph, retrieve_sample, store_sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalScore:
    accuracy: float
    completeness: float


def score_retrieval(stored: StableSubgraph, retrieved: StableSubgraph) -> RetrievalScore:
    """Edge-set precision (accuracy) and recall (completeness) of a retrieval.

    An empty retrieval produced no false content, so its accuracy is 1; an empty
    stored set leaves nothing to miss, so completeness is 1.
    """
    stored_edges = stored.edges
    got = retrieved.edges
    common = len(stored_edges & got)
    accuracy = common / len(got) if got else 1.0
    completeness = common / len(stored_edges) if stored_edges else 1.0
    return RetrievalScore(accuracy, completeness)


def representation_quality(subgraph: StableSubgraph, s: int) -> float:
    """Share of the ``s`` initial nodes that ended up connected: (s - l) / s."""
    if s < 1:
        raise ValueError(f"sample scale must be at least 1, got {s}")
    return (s - len(subgraph.isolated_initials)) / s


def simple_capacity_bound(n: int, K: int, s: float, c: float) -> float:
    """nK / (s + c): table slots divided by the nodes one subgraph consumes."""
    if s + c <= 0:
        raise ValueError(f"s + c must be positive, got {s + c}")
    return n * K / (s + c)


def grouping_capacity_bound(n: int, s: int, c: int, t: int) -> int:
    """Ways to pick ``t`` unordered, disjoint groups of size (s+c)/t out of ``n`` nodes.

    Computed as prod_k C(n - k*g, g) / t! in exact integer arithmetic.
    """
    total = s + c
    if t < 1:
        raise ValueError(f"group count t must be at least 1, got {t}")
    if total % t:
        raise ValueError(f"t={t} must divide s+c={total}")
    if total > n:
        raise ValueError(f"s+c={total} exceeds n={n}")
    g = total // t
    prod = 1
    for k in range(t):
        prod *= math.comb(n - k * g, g)
    q, r = divmod(prod, math.factorial(t))
    assert r == 0
    return q


# ---------------------------------------------------------------------------
# reliable capacity


@dataclass(frozen=True)
class CapacityThresholds:
    """Pass conditions for a stored prefix; ``q=None`` skips the per-sample Q check."""

    q: float | None = 0.9
    accuracy: float = 0.9
    completeness: float = 0.9

    def ok(self, q_values: Sequence[float], mean_p: float, mean_c: float) -> bool:
        if self.q is not None and any(v <= self.q for v in q_values):
            return False
        return mean_p > self.accuracy and mean_c > self.completeness


@dataclass
class CapacityRow:
    index: int
    Q: float
    mean_accuracy: float | None = None
    mean_completeness: float | None = None


@dataclass
class CapacityReport:
    T: int
    mean_accuracy: float
    mean_completeness: float
    per_sample_Q: list[float] = field(default_factory=list)
    rows: list[CapacityRow] = field(default_factory=list)
    # communication nodes per stored subgraph, over the counted prefix
    mean_communication_nodes: float = 0.0
    stored: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "Q", "mean_accuracy", "mean_completeness"])
        for r in self.rows:
            w.writerow([
                r.index,
                f"{r.Q:.6f}",
                "" if r.mean_accuracy is None else f"{r.mean_accuracy:.6f}",
                "" if r.mean_completeness is None else f"{r.mean_completeness:.6f}",
            ])
        return buf.getvalue()


def retrieval_means(
    net: Network,
    stored: Sequence[tuple[frozenset[int], StableSubgraph]],
    cfg: EpisodeConfig,
) -> tuple[float, float]:
    """Mean accuracy and completeness over full-cue retrievals of every stored sample."""
    if not stored:
        return 1.0, 1.0
    p = c = 0.0
    for cue, sg in stored:
        sc = score_retrieval(sg, retrieve_sample(net, cue, cfg))
        p += sc.accuracy
        c += sc.completeness
    return p / len(stored), c / len(stored)


def reliable_capacity(
    network_factory: Callable[[], Network],
    sample_stream: Iterable[tuple[Sequence[int], int]],
    cfg: EpisodeConfig,
    thresholds: CapacityThresholds = CapacityThresholds(),
    stride: int = 1,
    max_samples: int | None = None,
    on_store: Callable[[int, StableSubgraph], None] | None = None,
) -> CapacityReport:
    """Store samples one by one and report the longest prefix that still retrieves well.

    ``sample_stream`` yields ``(initial_nodes, seed)``. After each store every stored
    sample is retrieved with its full cue. With ``stride > 1`` retrieval passes run
    only every ``stride`` samples; once a pass fails, the samples since the last good
    pass are replayed from a saved copy and checked one at a time. Retrieval quality is
    not always monotone in the prefix length, so a dip that recovers before the next
    pass goes unseen and the result can exceed the ``stride=1`` value. Q is still
    checked after every store. ``on_store(index, subgraph)`` sees each first-pass store.
    """
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    net = network_factory()
    stored: list[tuple[frozenset[int], StableSubgraph]] = []
    seeds: list[int] = []
    q_values: list[float] = []
    rows: list[CapacityRow] = []
    good = _Checkpoint(0, net.copy(), 1.0, 1.0)
    failed = False

    for i, (sample, seed) in enumerate(sample_stream):
        if max_samples is not None and i >= max_samples:
            break
        cue = frozenset(sample)
        sg = store_sample(net, cue, cfg.with_(seed=seed))
        stored.append((cue, sg))
        seeds.append(seed)
        if on_store is not None:
            on_store(i, sg)
        q = representation_quality(sg, len(cue))
        q_values.append(q)
        rows.append(CapacityRow(i + 1, q))
        if thresholds.q is not None and q <= thresholds.q:
            failed = True
            break
        if (i + 1) % stride == 0:
            p, c = retrieval_means(net, stored, cfg)
            rows[-1].mean_accuracy, rows[-1].mean_completeness = p, c
            if not thresholds.ok(q_values, p, c):
                failed = True
                break
            good = _Checkpoint(i + 1, net.copy(), p, c)
    else:
        if stored and good.length < len(stored):
            p, c = retrieval_means(net, stored, cfg)
            rows[-1].mean_accuracy, rows[-1].mean_completeness = p, c
            if thresholds.ok(q_values, p, c):
                good = _Checkpoint(len(stored), net, p, c)
            else:
                failed = True

    T, mean_p, mean_c = good.length, good.p, good.c
    if failed and len(stored) - good.length > 1:
        # replay the gap after the last good pass and check every prefix
        replay = good.net
        for j in range(good.length, len(stored) - 1):
            cue, _ = stored[j]
            store_sample(replay, cue, cfg.with_(seed=seeds[j]))
            p, c = retrieval_means(replay, stored[: j + 1], cfg)
            rows[j].mean_accuracy, rows[j].mean_completeness = p, c
            if not thresholds.ok(q_values[: j + 1], p, c):
                break
            T, mean_p, mean_c = j + 1, p, c
    comm = [sg.communication_nodes for _, sg in stored[:T]] or [sg.communication_nodes for _, sg in stored]
    log.info("reliable capacity T=%d after storing %d samples", T, len(stored))
    return CapacityReport(
        T=T,
        mean_accuracy=mean_p,
        mean_completeness=mean_c,
        per_sample_Q=q_values,
        rows=rows,
        mean_communication_nodes=sum(comm) / len(comm) if comm else 0.0,
        stored=len(stored),
    )


@dataclass
class _Checkpoint:
    length: int
    net: Network
    p: float
    c: float


__all__ = [
    "CapacityReport",
    "CapacityRow",
    "CapacityThresholds",
    "RetrievalScore",
    "grouping_capacity_bound",
    "reliable_capacity",
    "representation_quality",
    "retrieval_means",
    "score_retrieval",
    "simple_capacity_bound",
]

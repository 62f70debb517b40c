"""Per-node memory: the bounded index table and the local decision rules that use it."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

NodeSet = frozenset  # frozenset[int]

DEFAULT_CAPACITY = 20
DEFAULT_SIMILARITY_THRESHOLD = 0.8
DEFAULT_MERGE_THRESHOLD = 0.5

EMPTY: frozenset[int] = frozenset()


@dataclass
class ActivationTrace:
    """One remembered (active fan-in -> active fan-out) pairing."""

    fan_in: frozenset[int]
    fan_out: frozenset[int]
    strength: int = 1


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    fan_out: frozenset[int] = EMPTY
    score: float = 0.0


class IndexTable:
    """Mapping from fan-in sets to traces, capped at ``capacity`` distinct fan-out sets.

    Iteration order is storage order; overwriting an existing fan-in keeps its slot.
    """

    __slots__ = ("capacity", "_entries")

    def __init__(self, capacity: int = DEFAULT_CAPACITY, entries: Iterable[ActivationTrace] = ()):
        if capacity < 0:
            raise ValueError(f"capacity must be non-negative, got {capacity}")
        self.capacity = capacity
        self._entries: dict[frozenset[int], ActivationTrace] = {}
        for e in entries:
            self._entries[frozenset(e.fan_in)] = ActivationTrace(frozenset(e.fan_in), frozenset(e.fan_out), e.strength)

    @property
    def entries(self) -> list[ActivationTrace]:
        return list(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        # an empty table is still a table
        return True

    def get(self, fan_in: frozenset[int]) -> ActivationTrace | None:
        return self._entries.get(fan_in)

    def outputs(self) -> list[frozenset[int]]:
        """Distinct fan-out sets, ordered by their earliest-stored entry."""
        return list(dict.fromkeys(e.fan_out for e in self._entries.values()))

    def frequency(self) -> Counter:
        """How often each node occurs across all stored fan-out sets."""
        freq: Counter = Counter()
        for e in self._entries.values():
            freq.update(e.fan_out)
        return freq

    def copy(self) -> "IndexTable":
        return IndexTable(self.capacity, self._entries.values())

    def clear(self) -> None:
        self._entries.clear()

    def replace_entries(self, entries: Iterable[ActivationTrace]) -> None:
        self._entries = {}
        for e in entries:
            self._entries[e.fan_in] = e

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexTable):
            return NotImplemented
        return self.capacity == other.capacity and [
            (e.fan_in, e.fan_out, e.strength) for e in self._entries.values()
        ] == [(e.fan_in, e.fan_out, e.strength) for e in other._entries.values()]

    def __repr__(self) -> str:
        return f"IndexTable(capacity={self.capacity}, entries={len(self._entries)}, outputs={len(self.outputs())})"


def f1_score(a: Iterable[int], b: Iterable[int]) -> float:
    """Harmonic mean of precision and recall between two node sets (1.0 for two empty sets)."""
    a = a if isinstance(a, (set, frozenset)) else set(a)
    b = b if isinstance(b, (set, frozenset)) else set(b)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    tp = len(a & b)
    return 2.0 * tp / (len(a) + len(b))


def lookup(table: IndexTable, current_in: frozenset[int], threshold: float = DEFAULT_SIMILARITY_THRESHOLD) -> MatchResult:
    """Best-matching stored fan-out for ``current_in``; only scores strictly above ``threshold`` count."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"similarity threshold must lie in (0, 1], got {threshold}")
    exact = table.get(current_in)
    if exact is not None:
        # keys are unique, so no other entry can also score 1.0
        return MatchResult(True, exact.fan_out, 1.0) if threshold < 1.0 else MatchResult(False)
    best: ActivationTrace | None = None
    best_score = 0.0
    for entry in table._entries.values():
        score = f1_score(entry.fan_in, current_in)
        if score > threshold and score > best_score:
            best, best_score = entry, score
    if best is None:
        return MatchResult(False)
    return MatchResult(True, best.fan_out, best_score)


def select_fanout(table: IndexTable, candidates: Sequence[int], e_out: int, rng: random.Random) -> frozenset[int]:
    """Weighted sampling without replacement; weight of v is ``1 / (1 + freq(v))``.

    Nodes that appear often in stored fan-outs are less likely to be picked.
    """
    if e_out < 1:
        raise ValueError(f"e_out must be at least 1, got {e_out}")
    pool = list(candidates)
    if len(pool) <= e_out:
        return frozenset(pool)
    freq = table.frequency() if len(table) else None
    if freq:
        weights = [1.0 / (1.0 + freq[v]) for v in pool]
    else:
        weights = [1.0] * len(pool)
    chosen = []
    total = sum(weights)
    for _ in range(e_out):
        r = rng.random() * total
        acc = 0.0
        idx = len(pool) - 1
        for i, w in enumerate(weights):
            acc += w
            if r < acc:
                idx = i
                break
        chosen.append(pool[idx])
        total -= weights[idx]
        del pool[idx]
        del weights[idx]
    return frozenset(chosen)


def record_trace(
    table: IndexTable,
    trace: ActivationTrace,
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
) -> IndexTable:
    """Store ``trace`` in ``table`` (in place) and restore the distinct-output bound.

    Repeating an identical pairing bumps its strength; a new fan-out for a known
    fan-in overwrites it with strength 1.
    """
    fan_in = frozenset(trace.fan_in)
    fan_out = frozenset(trace.fan_out)
    existing = table.get(fan_in)
    if existing is not None and existing.fan_out == fan_out:
        existing.strength += 1
    elif existing is not None:
        existing.fan_out = fan_out
        existing.strength = 1
    else:
        table._entries[fan_in] = ActivationTrace(fan_in, fan_out, 1)
    enforce_capacity(table, merge_threshold)
    return table


def enforce_capacity(table: IndexTable, merge_threshold: float = DEFAULT_MERGE_THRESHOLD) -> None:
    """Merge or discard fan-out sets until at most ``table.capacity`` distinct ones remain."""
    outputs = table.outputs()
    while len(outputs) > table.capacity:
        pair = _most_similar_outputs(outputs)
        if pair is not None and pair[2] >= merge_threshold:
            a, b, _ = pair
            merged = a & b
            for e in list(table._entries.values()):
                if e.fan_out == a or e.fan_out == b:
                    if merged:
                        e.fan_out = merged
                    else:
                        del table._entries[e.fan_in]
        else:
            strength: dict[frozenset[int], int] = {}
            for e in table._entries.values():
                strength[e.fan_out] = strength.get(e.fan_out, 0) + e.strength
            weakest = min(outputs, key=lambda out: strength[out])  # min keeps the earliest on ties
            for e in list(table._entries.values()):
                if e.fan_out == weakest:
                    del table._entries[e.fan_in]
        outputs = table.outputs()


def _most_similar_outputs(outputs: list[frozenset[int]]) -> tuple[frozenset[int], frozenset[int], float] | None:
    best = None
    best_score = -1.0
    for i in range(len(outputs)):
        for j in range(i + 1, len(outputs)):
            score = f1_score(outputs[i], outputs[j])
            if score > best_score:
                best, best_score = (outputs[i], outputs[j]), score
    if best is None:
        return None
    return best[0], best[1], best_score

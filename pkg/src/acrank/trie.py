"""Prefix trie for candidate matching with per-node popularity shortlists.

Each node keeps its subtree's top-N queries precomputed so that a prefix
lookup is a walk plus a slice, with no subtree traversal at query time.
The shortlist cap bounds latency at the cost of recall past N; disable it
(shortlist_size=None) to make lookups exact.
"""

from __future__ import annotations

from typing import Iterable, Iterator

from .sessions import normalize_match

DEFAULT_SHORTLIST = 50


class _Node:
    __slots__ = ("children", "terminal", "shortlist")

    def __init__(self):
        self.children: dict[str, _Node] = {}
        self.terminal: str | None = None
        self.shortlist: list[tuple[str, float]] = []


class PrefixTrie:
    """Character trie over normalized queries with popularity ordering.

    Mutations (insert) happen at build time; after ``freeze`` the
    structure is read-only and safe for concurrent lookups.
    """

    def __init__(self, shortlist_size: int | None = DEFAULT_SHORTLIST):
        if shortlist_size is not None and shortlist_size < 1:
            raise ValueError("shortlist_size must be >= 1 or None")
        self.shortlist_size = shortlist_size
        self._root = _Node()
        self._popularity: dict[str, float] = {}
        self._frozen = False

    def __len__(self) -> int:
        return len(self._popularity)

    def insert(self, query: str, popularity: float = 0.0) -> None:
        """Add a query; duplicate inserts merge by summing popularity."""
        if self._frozen:
            raise RuntimeError("trie is frozen")
        if popularity < 0:
            raise ValueError("popularity must be >= 0")
        key = normalize_match(query)
        if not key:
            raise ValueError("empty query")
        self._popularity[key] = self._popularity.get(key, 0.0) + popularity
        node = self._root
        for char in key:
            node = node.children.setdefault(char, _Node())
        node.terminal = key

    def freeze(self) -> "PrefixTrie":
        """Precompute every node's shortlist; call once after the last insert."""
        if not self._frozen:
            self._build_shortlists(self._root)
            self._frozen = True
        return self

    def _build_shortlists(self, node: _Node) -> list[tuple[str, float]]:
        entries: list[tuple[str, float]] = []
        if node.terminal is not None:
            entries.append((node.terminal, self._popularity[node.terminal]))
        for char in sorted(node.children):
            entries.extend(self._build_shortlists(node.children[char]))
        entries.sort(key=lambda item: (-item[1], item[0]))
        if self.shortlist_size is not None:
            entries = entries[:self.shortlist_size]
        node.shortlist = entries
        return entries

    def lookup(self, prefix: str) -> list[str]:
        """Queries having the normalized prefix, popularity-ordered, capped
        at the shortlist size.  Empty prefix matches everything."""
        if not self._frozen:
            self.freeze()
        key = normalize_match(prefix)
        node = self._root
        for char in key:
            child = node.children.get(char)
            if child is None:
                return []
            node = child
        return [query for query, _ in node.shortlist]

    def lookup_scored(self, prefix: str) -> list[tuple[str, float]]:
        if not self._frozen:
            self.freeze()
        key = normalize_match(prefix)
        node = self._root
        for char in key:
            child = node.children.get(char)
            if child is None:
                return []
            node = child
        return list(node.shortlist)

    def queries(self) -> Iterator[str]:
        return iter(sorted(self._popularity))

    def popularity(self, query: str) -> float:
        return self._popularity.get(normalize_match(query), 0.0)


def build_trie(
    entries: Iterable[tuple[str, float]],
    shortlist_size: int | None = DEFAULT_SHORTLIST,
) -> PrefixTrie:
    """Build and freeze a trie from (query, popularity) pairs."""
    trie = PrefixTrie(shortlist_size=shortlist_size)
    for query, popularity in entries:
        trie.insert(query, popularity)
    return trie.freeze()


def trie_from_stats_lines(
    lines: Iterable[str],
    shortlist_size: int | None = DEFAULT_SHORTLIST,
) -> PrefixTrie:
    """Build from the behavioral stats file (one JSON record per line)."""
    import json

    from .features import HALF_LIFE_DAYS, decayed_aggregate

    trie = PrefixTrie(shortlist_size=shortlist_size)
    for line in lines:
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        popularity = decayed_aggregate(record["daily_counts"], HALF_LIFE_DAYS)
        trie.insert(record["query"], popularity)
    return trie.freeze()

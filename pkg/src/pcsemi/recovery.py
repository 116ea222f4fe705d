"""Clique recovery: maximal-clique enumeration, the good-clique filter, the
unique-good-clique rule, degree refinement of externally supplied candidate
sets, Jaccard scoring, and the exact tail sum behind the disjointness
guarantee.

A clique of size >= s is *good* when its intersection with every other
listed clique of size >= s stays within floor(3 log2 n).  Recovery outputs
the unique good clique containing the revealed vertex, or the empty set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph_model import Graph

DEFAULT_BUDGET = 5_000_000


@dataclass(frozen=True)
class CliqueSet:
    """Enumerated cliques plus how much enumeration effort they cost."""

    cliques: tuple[frozenset[int], ...]
    min_size: int
    budget_used: int
    truncated: bool


@dataclass(frozen=True)
class RecoveryResult:
    vertices: frozenset[int]
    good_clique_count: int
    truncated: bool


def _neighbor_masks(graph: Graph) -> list[int]:
    masks = []
    for i in range(graph.n):
        row = 0
        for j in np.flatnonzero(graph.adj[i]):
            row |= 1 << int(j)
        masks.append(row)
    return masks


def maximal_cliques(graph: Graph, min_size: int = 1, budget: int = DEFAULT_BUDGET) -> CliqueSet:
    """All maximal cliques of size >= min_size by pivoting branch and bound.

    ``budget`` caps the number of expanded search nodes; exhausting it sets
    the truncated flag on the (partial) result instead of discarding it.
    """
    if graph.n > 512:
        raise ValueError(f"enumeration capped at n <= 512, got n={graph.n}")
    if budget <= 0:
        raise ValueError("budget must be positive")
    min_size = max(min_size, 1)
    nbr = _neighbor_masks(graph)
    found: list[frozenset[int]] = []
    state = {"nodes": 0, "truncated": False}

    def expand(members: list[int], cand: int, done: int) -> None:
        if state["truncated"]:
            return
        state["nodes"] += 1
        if state["nodes"] > budget:
            state["truncated"] = True
            return
        if cand == 0 and done == 0:
            if len(members) >= min_size:
                found.append(frozenset(members))
            return
        if len(members) + cand.bit_count() < min_size:
            return
        pool = cand | done
        pivot, best = -1, -1
        while pool:
            bit = pool & -pool
            u = bit.bit_length() - 1
            pool ^= bit
            score = (cand & nbr[u]).bit_count()
            if score > best:
                best, pivot = score, u
        ext = cand & ~nbr[pivot]
        while ext:
            bit = ext & -ext
            v = bit.bit_length() - 1
            ext ^= bit
            expand(members + [v], cand & nbr[v], done & nbr[v])
            if state["truncated"]:
                return
            cand &= ~bit
            done |= bit

    expand([], (1 << graph.n) - 1, 0)
    ordered = tuple(sorted(found, key=lambda c: tuple(sorted(c))))
    return CliqueSet(
        cliques=ordered,
        min_size=min_size,
        budget_used=state["nodes"],
        truncated=state["truncated"],
    )


def intersection_threshold(n: int) -> int:
    """Largest allowed overlap between good cliques: floor(3 log2 n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.floor(3.0 * math.log2(n)) if n > 1 else 0


def good_cliques(cliques: CliqueSet, s: int, n: int) -> CliqueSet:
    """Keep size->=s cliques whose pairwise overlaps stay within the
    threshold; both members of an offending pair are dropped.

    Only pairs with both sizes above the threshold can offend (the overlap
    is at most the smaller size), so the quadratic scan is restricted to
    those.
    """
    thr = intersection_threshold(n)
    big = [c for c in cliques.cliques if len(c) >= s]
    over = [c for c in big if len(c) > thr]
    bad: set[frozenset[int]] = set()
    for i in range(len(over)):
        for j in range(i + 1, len(over)):
            if len(over[i] & over[j]) > thr:
                bad.add(over[i])
                bad.add(over[j])
    return CliqueSet(
        cliques=tuple(c for c in big if c not in bad),
        min_size=max(cliques.min_size, s),
        budget_used=cliques.budget_used,
        truncated=cliques.truncated,
    )


def recover(graph: Graph, v: int, s: int, budget: int = DEFAULT_BUDGET) -> RecoveryResult:
    """Output the unique good clique containing v, else the empty set."""
    if not 0 <= v < graph.n:
        raise ValueError(f"vertex {v} outside [0, {graph.n})")
    enum = maximal_cliques(graph, min_size=s, budget=budget)
    good = good_cliques(enum, s, graph.n)
    holding = [c for c in good.cliques if v in c]
    vertices = holding[0] if len(holding) == 1 else frozenset()
    return RecoveryResult(
        vertices=vertices,
        good_clique_count=len(good.cliques),
        truncated=enum.truncated,
    )


def degree_refine(graph: Graph, candidate: Iterable[int], s: int) -> frozenset[int]:
    """Vertices adjacent to at least ceil(7s/8) members of the candidate set."""
    members = sorted(set(int(u) for u in candidate))
    if not members:
        raise ValueError("candidate set must be nonempty")
    thr = math.ceil(7 * s / 8)
    counts = graph.adj[:, members].sum(axis=1)
    return frozenset(int(u) for u in np.flatnonzero(counts >= thr))


def is_clique(graph: Graph, vertices: Iterable[int]) -> bool:
    members = sorted(set(int(u) for u in vertices))
    if len(members) <= 1:
        return True
    sub = graph.adj[np.ix_(members, members)]
    return bool((sub | np.eye(len(members), dtype=bool)).all())


def refine_and_select(
    graph: Graph, candidates: Sequence[Iterable[int]], v: int, s: int
) -> frozenset[int]:
    """Degree-refine externally supplied candidate sets, drop non-cliques and
    overlapping pairs, and return the unique survivor containing v.

    Refined sets are deduplicated first: corrupted copies of the same clique
    refine to identical sets, which are one candidate, not an overlapping
    pair.
    """
    thr = intersection_threshold(graph.n)
    refined: list[frozenset[int]] = []
    for cand in candidates:
        members = set(int(u) for u in cand)
        if not members:
            continue
        tightened = degree_refine(graph, members, s)
        if len(tightened) >= s and is_clique(graph, tightened):
            refined.append(tightened)
    refined = sorted(set(refined), key=lambda c: tuple(sorted(c)))
    bad: set[frozenset[int]] = set()
    for i in range(len(refined)):
        for j in range(i + 1, len(refined)):
            if len(refined[i] & refined[j]) > thr:
                bad.add(refined[i])
                bad.add(refined[j])
    survivors = [c for c in refined if c not in bad and v in c]
    return survivors[0] if len(survivors) == 1 else frozenset()


def jaccard(a: Iterable[int], b: Iterable[int]) -> float:
    """|a & b| / |a | b|, with 1.0 when both sets are empty."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def union_bound_probability(n: int, s: int, l0: int) -> float:
    """Exact tail sum_{l0 <= l < s} C(s,l) C(n-s,s-l) 2^{-l(s-l)} in log space.

    Bounds the chance that some other size-s clique overlaps the planted one
    in at least l0 vertices.  Empty ranges give 0.
    """
    if not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if l0 < 1:
        raise ValueError(f"need l0 >= 1, got l0={l0}")
    logs = []
    for l in range(l0, s):
        if s - l > n - s:
            continue
        logs.append(
            _log_comb(s, l) + _log_comb(n - s, s - l) - l * (s - l) * math.log(2.0)
        )
    if not logs:
        return 0.0
    top = max(logs)
    return math.exp(top) * math.fsum(math.exp(x - top) for x in logs)

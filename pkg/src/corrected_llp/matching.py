"""Exact maximum-weight perfect matching on complete graphs.

All solvers here work on exact integer edge weights and return the
lexicographically smallest optimal matching: pairs ``(i, j)`` with ``i < j``,
sorted, and compared pair by pair.  Ties are therefore resolved the same way
no matter which solver produced the optimum.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import networkx as nx

from .errors import DomainError

Pairs = list[tuple[int, int]]

BRUTE_FORCE_LIMIT = 12


def _check_even(n: int) -> None:
    if n % 2:
        raise DomainError(f"a perfect matching needs an even number of vertices, got {n}")


def matching_weight(weights, pairs: Sequence[tuple[int, int]]):
    return sum(weights[i][j] for i, j in pairs)


def max_weight_perfect_matching(weights) -> Pairs:
    """Blossom-based exact solver for a dense symmetric integer weight matrix.

    Ties are broken by adding a lexicographic bonus that is strictly smaller
    than one unit of the original weight, so the perturbed optimum is an
    optimum of the original problem and the lexicographically smallest one.
    """
    n = len(weights)
    _check_even(n)
    if n == 0:
        return []
    # bonus(i, j) = B_i (n - j), B_i = (n+1)^(n-1-i): pair (i, j_small) beats every
    # rearrangement of later pairs, and the total bonus stays below scale.
    base = n + 1
    scale = base**n
    graph = nx.Graph()
    for i in range(n):
        bonus_i = base ** (n - 1 - i)
        for j in range(i + 1, n):
            w = int(weights[i][j])
            graph.add_edge(i, j, weight=w * scale + bonus_i * (n - j))
    mate = nx.max_weight_matching(graph, maxcardinality=True)
    pairs = sorted((min(a, b), max(a, b)) for a, b in mate)
    if len(pairs) != n // 2:
        raise RuntimeError("matching solver returned an imperfect matching")
    return pairs


def perfect_matchings(vertices: Sequence[int]) -> Iterator[Pairs]:
    """All perfect matchings of ``vertices``, in lexicographic order."""
    if not vertices:
        yield []
        return
    first, rest = vertices[0], vertices[1:]
    for k, partner in enumerate(rest):
        remaining = rest[:k] + rest[k + 1:]
        for tail in perfect_matchings(remaining):
            yield [(first, partner)] + tail


def brute_force_matching(weights) -> Pairs:
    """Enumerate all ``(2N-1)!!`` perfect matchings; test oracle for ``2N <= 12``."""
    n = len(weights)
    _check_even(n)
    if n > BRUTE_FORCE_LIMIT:
        raise DomainError(f"brute force is limited to {BRUTE_FORCE_LIMIT} vertices, got {n}")
    best, best_value = None, None
    for pairs in perfect_matchings(list(range(n))):
        value = matching_weight(weights, pairs)
        if best_value is None or value > best_value:
            best, best_value = pairs, value
    return best


def _outside_in_value(values: list[int]) -> int:
    v = sorted(values)
    return sum((v[k] - v[-1 - k]) ** 2 for k in range(len(v) // 2))


def squared_gap_matching(values: Sequence[int]) -> Pairs:
    """Optimal matching for edge weights ``(v_i - v_j)^2`` on integers.

    Maximizing the sum of squared differences is minimizing the sum of
    products within pairs; an exchange argument shows that pairing the sorted
    sequence outside-in is optimal.  That closed-form value is used as an
    oracle while pairs are fixed greedily in lexicographic order.  Vertices
    with equal value are interchangeable, so only one candidate per distinct
    value needs checking.
    """
    values = [int(v) for v in values]
    n = len(values)
    _check_even(n)
    remaining = list(range(n))
    pairs: Pairs = []
    while remaining:
        u, rest = remaining[0], remaining[1:]
        target = _outside_in_value([values[k] for k in remaining])
        seen = set()
        for v in rest:
            if values[v] in seen:
                continue
            seen.add(values[v])
            others = [values[k] for k in rest if k != v]
            if (values[u] - values[v]) ** 2 + _outside_in_value(others) == target:
                pairs.append((u, v))
                remaining = [k for k in rest if k != v]
                break
        else:  # pragma: no cover - the outside-in optimum always has a first pair
            raise RuntimeError("no feasible partner found")
    return pairs

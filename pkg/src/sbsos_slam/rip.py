"""Variable blocks satisfying the running intersection property.

Pipeline: correlative-sparsity graph -> minimum-degree elimination ->
chordal completion -> maximal cliques -> maximum-weight clique tree ->
root-first traversal.  Any root-first ordering of a clique tree satisfies
the running intersection property, which :func:`validate_rip` checks
directly from the definition.
"""

from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

Graph = dict[int, set[int]]


def interaction_graph(supports: Iterable[Iterable[int]], variables: Iterable[int] = ()) -> Graph:
    """Undirected graph joining every pair of variables that share a support."""
    g: Graph = {v: set() for v in variables}
    for sup in supports:
        sup = list(sup)
        for v in sup:
            g.setdefault(v, set())
        for a in range(len(sup)):
            for b in range(a + 1, len(sup)):
                if sup[a] != sup[b]:
                    g[sup[a]].add(sup[b])
                    g[sup[b]].add(sup[a])
    return g


def edge_count(g: Graph) -> int:
    return sum(len(nb) for nb in g.values()) // 2


def min_degree_ordering(g: Graph) -> tuple[list[int], Graph]:
    """Greedy minimum-degree elimination; ties go to the lowest variable id.

    Returns the ordering and the chordal completion (filled graph).
    """
    work = {v: set(nb) for v, nb in g.items()}
    filled = {v: set(nb) for v, nb in g.items()}
    heap = [(len(nb), v) for v, nb in work.items()]
    heapq.heapify(heap)
    order = []
    done = set()
    while heap:
        deg, v = heapq.heappop(heap)
        if v in done or deg != len(work[v]):
            continue
        order.append(v)
        done.add(v)
        nbrs = work.pop(v)
        for a in nbrs:
            work[a].discard(v)
        for a in nbrs:
            new = nbrs - work[a] - {a}
            if new:
                work[a] |= new
                filled[a] |= new
                for b in new:
                    filled[b].add(a)
        for a in nbrs:
            heapq.heappush(heap, (len(work[a]), a))
    return order, filled


def maximal_cliques_from_ordering(order: Sequence[int], filled: Graph) -> list[frozenset[int]]:
    """Maximal cliques of a chordal graph given a perfect elimination ordering."""
    pos = {v: k for k, v in enumerate(order)}
    candidates = []
    for v in order:
        later = {u for u in filled[v] if pos[u] > pos[v]}
        candidates.append(frozenset(later | {v}))
    out: list[frozenset[int]] = []
    for c in sorted(set(candidates), key=lambda c: (-len(c), sorted(c))):
        if not any(c <= d for d in out):
            out.append(c)
    return out


class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        while self.p[a] != a:
            self.p[a] = self.p[self.p[a]]
            a = self.p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.p[max(ra, rb)] = min(ra, rb)
        return True


def clique_tree(cliques: Sequence[frozenset[int]]) -> list[tuple[int, int]]:
    """Kruskal maximum-weight spanning tree over clique intersection sizes.

    Components that share no variable are joined with zero-weight edges so a
    single tree always results.
    """
    k = len(cliques)
    cand = []
    for a in range(k):
        for b in range(a + 1, k):
            w = len(cliques[a] & cliques[b])
            cand.append((-w, a, b))
    cand.sort()
    uf = _UnionFind(k)
    tree = []
    for _, a, b in cand:
        if uf.union(a, b):
            tree.append((a, b))
    return tree


def _root_first_order(k: int, tree: Sequence[tuple[int, int]], root: int) -> tuple[list[int], dict[int, int]]:
    adj: dict[int, list[int]] = {a: [] for a in range(k)}
    for a, b in tree:
        adj[a].append(b)
        adj[b].append(a)
    order, parent = [root], {root: -1}
    stack = [root]
    while stack:
        a = stack.pop()
        for b in sorted(adj[a], reverse=True):
            if b not in parent:
                parent[b] = a
                order.append(b)
                stack.append(b)
    return order, parent


@dataclass(frozen=True)
class Block:
    """Variables ``I``, constraint indices ``J`` and cost-term ids of one block."""

    variables: tuple[int, ...]
    constraints: tuple[int, ...] = ()
    terms: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class Decomposition:
    """Ordered blocks plus the supports they were built from.

    ``variables``, ``term_supports`` and ``constraint_supports`` are optional;
    when present :func:`validate_rip` checks the covering conditions against
    them.
    """

    blocks: tuple[Block, ...]
    variables: frozenset[int] | None = None
    term_supports: tuple[frozenset[int], ...] | None = None
    constraint_supports: tuple[frozenset[int], ...] | None = None

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]]) -> Decomposition:
        return cls(tuple(Block(tuple(sorted(s))) for s in sets))

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @property
    def max_block_size(self) -> int:
        return max((b.size for b in self.blocks), default=0)

    def blocks_containing(self, var: int) -> list[int]:
        return [k for k, b in enumerate(self.blocks) if var in b.variables]

    def summary(self) -> dict:
        seen: set[int] = set()
        overlaps = []
        for b in self.blocks:
            overlaps.append(len(seen & set(b.variables)))
            seen |= set(b.variables)
        return {
            "num_blocks": len(self.blocks),
            "block_sizes": [b.size for b in self.blocks],
            "overlaps": overlaps,
            "max_block_size": self.max_block_size,
            "blocks": [
                {"variables": list(b.variables), "constraints": list(b.constraints), "terms": list(b.terms)}
                for b in self.blocks
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.summary(), **kwargs)


def _coalesce(cliques: list[frozenset[int]], tree: list[tuple[int, int]], threshold: float):
    """Merge tree-adjacent cliques whose overlap covers ``threshold`` of the smaller one."""
    cliques = list(cliques)
    tree = list(tree)
    changed = True
    while changed:
        changed = False
        for e, (a, b) in enumerate(tree):
            inter = len(cliques[a] & cliques[b])
            if inter >= threshold * min(len(cliques[a]), len(cliques[b])):
                keep, drop = min(a, b), max(a, b)
                cliques[keep] = cliques[keep] | cliques[drop]
                tree.pop(e)
                tree = [(keep if x == drop else x, keep if y == drop else y) for x, y in tree]
                # renumber to close the gap left by ``drop``
                cliques.pop(drop)
                tree = [(x - (x > drop), y - (y > drop)) for x, y in tree]
                changed = True
                break
    return cliques, tree


def chordal_blocks(
    graph: Graph,
    term_supports: Sequence[Iterable[int]] = (),
    constraint_supports: Sequence[Iterable[int]] = (),
    *,
    coalesce: bool = False,
    coalesce_threshold: float = 0.9,
    max_block_size: int | None = None,
) -> Decomposition:
    """Decompose ``graph`` into RIP-ordered blocks.

    Each cost term goes to the first block (in order) containing its support;
    each constraint to every block containing its support.
    """
    terms = tuple(frozenset(t) for t in term_supports)
    cons = tuple(frozenset(c) for c in constraint_supports)
    if not graph:
        return Decomposition((), frozenset(), terms, cons)
    order, filled = min_degree_ordering(graph)
    cliques = maximal_cliques_from_ordering(order, filled)
    tree = clique_tree(cliques)
    if coalesce:
        cliques, tree = _coalesce(cliques, tree, coalesce_threshold)
    root = min(range(len(cliques)), key=lambda a: (min(cliques[a]), -len(cliques[a])))
    visit, _ = _root_first_order(len(cliques), tree, root)
    sets = [cliques[a] for a in visit]

    term_of: dict[int, list[int]] = {k: [] for k in range(len(sets))}
    for t, sup in enumerate(terms):
        home = next((k for k, s in enumerate(sets) if sup <= s), None)
        if home is None:
            raise ValueError(f"cost term {t} is not covered by any block")
        term_of[home].append(t)
    cons_of: dict[int, list[int]] = {k: [] for k in range(len(sets))}
    for j, sup in enumerate(cons):
        homes = [k for k, s in enumerate(sets) if sup <= s]
        if not homes:
            raise ValueError(f"constraint {j} is not covered by any block")
        for k in homes:
            cons_of[k].append(j)

    blocks = tuple(
        Block(tuple(sorted(s)), tuple(cons_of[k]), tuple(term_of[k])) for k, s in enumerate(sets)
    )
    dec = Decomposition(blocks, frozenset(graph), terms, cons)
    if max_block_size is not None and dec.max_block_size > max_block_size:
        warnings.warn(
            f"largest block has {dec.max_block_size} variables (cap {max_block_size})",
            RuntimeWarning,
            stacklevel=2,
        )
    return dec


def decompose(
    term_supports: Sequence[Iterable[int]],
    constraint_supports: Sequence[Iterable[int]] = (),
    variables: Iterable[int] = (),
    **kwargs,
) -> Decomposition:
    """Build the interaction graph from supports and decompose it."""
    term_supports = [frozenset(t) for t in term_supports]
    constraint_supports = [frozenset(c) for c in constraint_supports]
    g = interaction_graph(list(term_supports) + list(constraint_supports), variables)
    return chordal_blocks(g, term_supports, constraint_supports, **kwargs)


def rip_violations(dec: Decomposition) -> list[str]:
    """Human-readable list of every violated condition (empty when RIP holds)."""
    problems = []
    sets = [set(b.variables) for b in dec.blocks]
    if dec.term_supports is not None:
        owners: Mapping[int, list[int]] = {}
        for k, b in enumerate(dec.blocks):
            for t in b.terms:
                owners.setdefault(t, []).append(k)
        for t, sup in enumerate(dec.term_supports):
            homes = owners.get(t, [])
            if not homes:
                problems.append(f"cost term {t} is not assigned to a block")
            for k in homes:
                if not sup <= sets[k]:
                    problems.append(f"cost term {t} has support outside block {k}")
    for k, b in enumerate(dec.blocks):
        for j in b.constraints:
            if dec.constraint_supports is None:
                continue
            if not 0 <= j < len(dec.constraint_supports):
                problems.append(f"block {k} lists unknown constraint {j}")
            elif not dec.constraint_supports[j] <= sets[k]:
                problems.append(f"constraint {j} has support outside block {k}")
    union = set().union(*sets) if sets else set()
    if dec.variables is not None and union != set(dec.variables):
        problems.append(f"blocks cover {len(union)} of {len(dec.variables)} variables")
    if dec.constraint_supports is not None:
        covered = {j for b in dec.blocks for j in b.constraints}
        missing = set(range(len(dec.constraint_supports))) - covered
        if missing:
            problems.append(f"constraints {sorted(missing)} are not in any block")
    seen: set[int] = set()
    for k, s in enumerate(sets):
        if k > 0:
            inter = s & seen
            if not any(inter <= sets[r] for r in range(k)):
                problems.append(f"block {k} breaks running intersection on {sorted(inter)}")
        seen |= s
    return problems


def validate_rip(dec: Decomposition) -> bool:
    return not rip_violations(dec)

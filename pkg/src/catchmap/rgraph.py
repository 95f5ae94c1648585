"""Forwarding graphs: every next hop a node may end up using.

One seeded propagation run yields, per node, the set of neighbors offering a
route in the node's maximal preference class. Those neighbors become the
node's parents in a directed acyclic graph rooted at the destination; any
root-to-node path in it is a route the node could take under some tie-break.

``brute_force_eligible_paths`` recomputes the same path sets by exhaustively
enumerating tie-break choices and re-running propagation for each, sharing no
code with the graph construction: it exists to cross-check it.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .bgpsim import Path, run_bgp
from .errors import CapacityError, ConvergenceError, CycleError, UnknownNodeError
from .topology import AugmentedTopology

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RGraph:
    """Directed acyclic graph of possible next hops, rooted at the destination.

    An edge parent -> child means the child may forward through the parent.
    ``ingress_map`` names the ingress point of each node directly attached to
    the root; ``report_nodes`` is the accounting universe (real nodes only,
    no root, no virtual chain nodes).
    """

    root: int
    ingress_map: Mapping[int, str]
    parents: Mapping[int, tuple[int, ...]]
    children: Mapping[int, tuple[int, ...]]
    nodes: tuple[int, ...]
    report_nodes: tuple[int, ...]

    @classmethod
    def from_parent_map(
        cls,
        root: int,
        ingress_map: Mapping[int, str],
        parents: Mapping[int, Iterable[int]],
        *,
        nodes: Iterable[int] = (),
        report_nodes: Iterable[int] | None = None,
    ) -> "RGraph":
        all_nodes = {root}
        all_nodes.update(nodes)
        norm_parents: dict[int, tuple[int, ...]] = {}
        for child, ps in parents.items():
            ps = tuple(sorted(set(ps)))
            all_nodes.add(child)
            all_nodes.update(ps)
            norm_parents[child] = ps
        for node in all_nodes:
            norm_parents.setdefault(node, ())
        if norm_parents[root]:
            raise CycleError(f"root {root} cannot have parents")
        children: dict[int, list[int]] = {node: [] for node in all_nodes}
        for child, ps in norm_parents.items():
            for p in ps:
                children[p].append(child)
        node_tuple = tuple(sorted(all_nodes))
        if report_nodes is None:
            report = tuple(n for n in node_tuple if n != root)
        else:
            report = tuple(sorted(report_nodes))
        return cls(
            root=root,
            ingress_map=dict(ingress_map),
            parents=norm_parents,
            children={n: tuple(sorted(c)) for n, c in children.items()},
            nodes=node_tuple,
            report_nodes=report,
        )

    @classmethod
    def from_edges(
        cls,
        root: int,
        edges: Iterable[tuple[int, int]],
        ingress_map: Mapping[int, str],
        *,
        nodes: Iterable[int] = (),
        report_nodes: Iterable[int] | None = None,
    ) -> "RGraph":
        """Build from (parent, child) pairs; handy for hand-drawn fixtures."""
        parent_map: dict[int, list[int]] = {}
        extra = set(nodes)
        for parent, child in edges:
            parent_map.setdefault(child, []).append(parent)
            extra.add(parent)
        return cls.from_parent_map(
            root, ingress_map, parent_map, nodes=extra, report_nodes=report_nodes
        )

    def edges(self) -> Iterator[tuple[int, int]]:
        for child in self.nodes:
            for parent in self.parents[child]:
                yield (parent, child)

    @property
    def num_edges(self) -> int:
        return sum(len(ps) for ps in self.parents.values())

    def with_parents(self, parents: Mapping[int, Iterable[int]]) -> "RGraph":
        """Same nodes and labels, different edge set."""
        return RGraph.from_parent_map(
            self.root,
            self.ingress_map,
            parents,
            nodes=self.nodes,
            report_nodes=self.report_nodes,
        )


def build_rgraph(aug: AugmentedTopology, seed: int = 0) -> RGraph:
    """Derive the forwarding graph from one propagation run.

    A node's parents are every neighbor whose fixed-point offer sits in the
    node's maximal local-preference class. The result does not depend on the
    seed (tie-breaks only pick among those same offers); tests sweep seeds to
    enforce that.
    """
    result = run_bgp(aug, seed)
    topology = aug.topology
    parents: dict[int, tuple[int, ...]] = {}
    for node, offers in result.ribs.items():
        if not offers:
            parents[node] = ()
            continue
        best_pref = max(topology.local_pref(node, k) for k in offers)
        parents[node] = tuple(
            sorted(k for k in offers if topology.local_pref(node, k) == best_pref)
        )
    return RGraph.from_parent_map(
        aug.n_dst,
        aug.ingress_map,
        parents,
        nodes=topology.nodes(),
        report_nodes=aug.real_nodes,
    )


def topological_order(g: RGraph) -> tuple[int, ...]:
    """Parents-before-children order, smallest node id first among ready nodes.

    Deterministic for a given graph. Raises CycleError if the graph has a
    directed cycle.
    """
    indegree = {node: len(g.parents[node]) for node in g.nodes}
    ready = [node for node, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for child in g.children[node]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(g.nodes):
        stuck = sorted(node for node, deg in indegree.items() if deg > 0)
        raise CycleError(f"directed cycle through nodes {stuck}")
    return tuple(order)


@dataclass(frozen=True)
class PathEnumeration:
    """Paths found by ``enumerate_rpaths``; ``truncated`` marks a hit limit."""

    paths: frozenset[Path]
    truncated: bool = False


def enumerate_rpaths(g: RGraph, node: int, limit: int = 100_000) -> PathEnumeration:
    """All root-to-node paths, each written source-first: (node, ..., root).

    Iterative depth-first walk along parent links, so deep graphs do not
    exhaust the interpreter stack. Stops after ``limit`` paths and flags
    the truncation.
    """
    if node not in g.parents:
        raise UnknownNodeError(f"node {node} not in forwarding graph")
    topological_order(g)  # reject cyclic input up front
    paths: list[Path] = []
    truncated = False
    # stack of (node, suffix built so far); parents pushed in reverse so the
    # smallest id is explored first
    stack: list[tuple[int, tuple[int, ...]]] = [(node, (node,))]
    while stack:
        current, suffix = stack.pop()
        if current == g.root:
            if len(paths) >= limit:
                truncated = True
                break
            paths.append(suffix)
            continue
        for parent in reversed(g.parents[current]):
            stack.append((parent, suffix + (parent,)))
    return PathEnumeration(paths=frozenset(paths), truncated=truncated)


# -- exhaustive cross-check ---------------------------------------------------

_MAX_BRUTE_NODES = 14


def _receivable_paths(
    aug: AugmentedTopology, max_paths: int = 500_000
) -> dict[int, set[Path]]:
    """Over-approximate every loop-free path a node could ever be offered.

    Ignores best-path selection entirely: a path is receivable if each hop's
    export policy lets it through. Superset of what any propagation run can
    realize, which is all the candidate-domain computation below needs.
    """
    topology = aug.topology
    root = aug.n_dst
    received: dict[int, set[Path]] = {n: set() for n in topology.nodes()}
    received[root].add((root,))
    queue: list[tuple[int, Path]] = [(root, (root,))]
    total = 1
    while queue:
        node, path = queue.pop()
        for neighbor in topology.neighbors(node):
            if neighbor in path:
                continue
            if node != root and not topology.exports(node, path[1], neighbor):
                continue
            extended = (neighbor, *path)
            if extended in received[neighbor]:
                continue
            received[neighbor].add(extended)
            total += 1
            if total > max_paths:
                raise CapacityError(
                    f"path closure exceeded {max_paths} entries; topology too dense"
                )
            queue.append((neighbor, extended))
    return received


def brute_force_eligible_paths(aug: AugmentedTopology, node: int) -> frozenset[Path]:
    """Every best path ``node`` can end up with under some tie-break.

    Enumerates, for each node, which neighbor it favors when indifferent,
    and replays propagation per combination with that favoritism baked into
    the ranking. Written independently of the forwarding-graph construction
    so the two can be compared.

    Guarded to small inputs (<= 14 nodes including the destination).
    """
    topology = aug.topology
    if topology.num_nodes > _MAX_BRUTE_NODES:
        raise CapacityError(
            f"exhaustive enumeration limited to {_MAX_BRUTE_NODES} nodes, "
            f"got {topology.num_nodes}"
        )
    if node not in topology:
        raise UnknownNodeError(f"node {node} not in topology")
    root = aug.n_dst
    if node == root:
        return frozenset({(root,)})
    received = _receivable_paths(aug)

    # candidate next hops per node: neighbors that could ever offer it a route
    choosers: list[int] = []
    domains: list[tuple[int, ...]] = []
    profile_count = 1
    for n in sorted(topology.nodes()):
        if n == root:
            continue
        candidates = tuple(sorted({p[1] for p in received[n]}))
        if len(candidates) > 1:
            choosers.append(n)
            domains.append(candidates)
            profile_count *= len(candidates)
            if profile_count > 2_000_000:
                raise CapacityError("too many tie-break combinations to enumerate")

    results: set[Path] = set()
    for combo in itertools.product(*domains) if domains else [()]:
        favored = dict(zip(choosers, combo))
        best = _propagate_with_favorites(aug, favored)
        path = best.get(node)
        if path is not None:
            results.add(path)
    logger.debug(
        "enumerated %d tie-break combinations for node %d: %d distinct paths",
        profile_count, node, len(results),
    )
    return frozenset(results)


def _propagate_with_favorites(
    aug: AugmentedTopology, favored: Mapping[int, int]
) -> dict[int, Path | None]:
    """Plain synchronous propagation with a fixed deterministic ranking.

    Ranking per node: preference class, then the favored neighbor, then the
    lowest neighbor id. Recomputes every node every round; no shortcuts, by
    design.
    """
    topology = aug.topology
    root = aug.n_dst
    best: dict[int, Path | None] = {n: None for n in topology.nodes()}
    best[root] = (root,)
    others = sorted(n for n in topology.nodes() if n != root)

    for round_no in range(2 * topology.num_nodes + 4):
        snapshot = dict(best)
        changed = False
        for n in others:
            choice: Path | None = None
            choice_key: tuple | None = None
            for k in topology.neighbors(n):
                offer = snapshot[k]
                if offer is None or n in offer:
                    continue
                if k != root and not topology.exports(k, offer[1], n):
                    continue
                key = (topology.local_pref(n, k), k == favored.get(n), -k)
                if choice_key is None or key > choice_key:
                    choice_key = key
                    choice = (n, *offer)
            if choice != best[n]:
                best[n] = choice
                changed = True
        if not changed:
            best.pop(root)
            return best
    raise ConvergenceError("tie-break replay did not reach a fixed point")


# -- exports -------------------------------------------------------------------


def rgraph_edgelist(g: RGraph) -> str:
    """One ``parent child`` pair per line, sorted."""
    return "".join(f"{p} {c}\n" for p, c in sorted(g.edges()))


def rgraph_dot(g: RGraph) -> str:
    """Graphviz description of the forwarding graph for visualization."""
    lines = ["digraph forwarding {", "  rankdir=TB;"]
    for node in g.nodes:
        if node == g.root:
            lines.append(f'  "{node}" [label="dst {node}" shape=doublecircle];')
        elif node in g.ingress_map:
            lines.append(f'  "{node}" [label="{node}\\n{g.ingress_map[node]}" shape=box];')
        elif node not in g.report_nodes:
            lines.append(f'  "{node}" [label="{node}" style=dashed];')
        else:
            lines.append(f'  "{node}" [label="{node}"];')
    for parent, child in sorted(g.edges()):
        lines.append(f'  "{parent}" -> "{child}";')
    lines.append("}")
    return "\n".join(lines) + "\n"

"""Catchment inference on a forwarding graph.

Two passes over the same DAG: a certainty pass that labels a node with an
ingress only when every possible next hop already carries that label, and a
probabilistic pass that mixes parent distributions with per-edge tie-break
probabilities. Both run in one topological sweep.

The shortest-path transform prunes edges that cannot lie on a
minimum-length route, for scenarios where routers break preference ties by
path length before anything random happens.
"""
from __future__ import annotations

import logging
import math
from typing import Mapping

from .errors import CatchmapError, InputError
from .rgraph import RGraph, topological_order

logger = logging.getLogger(__name__)

RoutingFunction = dict[int, "str | None"]
RouteProbabilities = dict[int, dict[str, float]]
TieProbabilities = Mapping[int, Mapping[int, float]]

_NORMALIZATION_TOL = 1e-9


def certain_inference(g: RGraph) -> RoutingFunction:
    """Assign an ingress to every node forced to it; None where uncertain.

    Nodes adjacent to the root are ground truth: they enter through their
    own attachment. Every other node inherits a label only when all of its
    parents share it. Unreachable nodes stay uncertain.
    """
    routes: RoutingFunction = {node: None for node in g.nodes}
    order = topological_order(g)
    seeded = set()
    for child in g.children[g.root]:
        try:
            routes[child] = g.ingress_map[child]
        except KeyError:
            raise CatchmapError(
                f"node {child} is attached to the root but has no ingress label"
            ) from None
        seeded.add(child)
    for node in order:
        if node == g.root or node in seeded:
            continue
        parent_routes = {routes[p] for p in g.parents[node]}
        if len(parent_routes) == 1:
            (only,) = parent_routes
            if only is not None:
                routes[node] = only
    return routes


def uniform_tie_probabilities(g: RGraph) -> dict[int, dict[int, float]]:
    """Equal probability for each parent of every node that has any."""
    return {
        node: {p: 1.0 / len(parents) for p in parents}
        for node, parents in g.parents.items()
        if parents
    }


def _validated_tie_probs(
    g: RGraph, tie_probs: TieProbabilities | None
) -> dict[int, dict[int, float]]:
    """Fill in uniform defaults and check support and normalization."""
    full = uniform_tie_probabilities(g)
    if tie_probs is None:
        return full
    for node, given in tie_probs.items():
        if node not in g.parents:
            raise InputError(f"tie probabilities for unknown node {node}")
        parents = g.parents[node]
        if set(given) != set(parents):
            raise InputError(
                f"tie probabilities of node {node} must cover exactly its "
                f"parents {list(parents)}, got {sorted(given)}"
            )
        if any(p < 0 for p in given.values()):
            raise InputError(f"negative tie probability at node {node}")
        sum_p = sum(given.values())
        if abs(sum_p - 1.0) > _NORMALIZATION_TOL:
            raise InputError(
                f"tie probabilities of node {node} sum to {sum_p!r}, not 1"
            )
        full[node] = dict(given)
    return full


def probabilistic_inference(
    g: RGraph,
    routes: RoutingFunction,
    tie_probs: TieProbabilities | None = None,
) -> RouteProbabilities:
    """Per-node distribution over ingress points.

    Nodes the certainty pass already pinned get probability one on their
    ingress. Every other node mixes its parents' distributions, weighted by
    the probability of picking each parent (uniform unless ``tie_probs``
    overrides; overrides must sum to one per node, tolerance 1e-9).
    Unreachable nodes get an empty distribution.
    """
    probs_of = _validated_tie_probs(g, tie_probs)
    out: RouteProbabilities = {}
    for node in topological_order(g):
        if node == g.root:
            out[node] = {}
            continue
        assigned = routes.get(node)
        if assigned is not None:
            out[node] = {assigned: 1.0}
            continue
        mixed: dict[str, float] = {}
        for parent in g.parents[node]:
            weight = probs_of[node][parent]
            if weight == 0.0:
                continue
            if parent == g.root:
                # an uncertain node directly attached to the root enters
                # through its own attachment with that tie's probability
                mixed[g.ingress_map[node]] = (
                    mixed.get(g.ingress_map[node], 0.0) + weight
                )
                continue
            for ingress, p in out[parent].items():
                if p == 0.0:
                    continue
                mixed[ingress] = mixed.get(ingress, 0.0) + weight * p
        out[node] = mixed
    return out


def shortest_path_transform(g: RGraph) -> RGraph:
    """Drop parent edges that cannot start a minimum-length route to the root.

    Node levels are computed in one sweep; an edge from parent j survives
    only if going through j achieves the node's level. Unreachable parts of
    the graph keep their edges (their level is infinite on both sides).
    """
    level: dict[int, float] = {}
    for node in topological_order(g):
        if node == g.root:
            level[node] = 0.0
            continue
        level[node] = min(
            (level[p] + 1.0 for p in g.parents[node]), default=math.inf
        )
    pruned = {
        node: tuple(p for p in parents if not level[p] + 1.0 > level[node])
        for node, parents in g.parents.items()
    }
    kept = sum(len(p) for p in pruned.values())
    logger.debug("shortest-path pruning kept %d of %d edges", kept, g.num_edges)
    return g.with_parents(pruned)


def expected_load(
    probs: RouteProbabilities, traffic: Mapping[int, float]
) -> dict[str, float]:
    """Expected traffic volume arriving at each ingress.

    Sums each node's volume weighted by its routing distribution. Volumes
    must be non-negative and every node with traffic must have a
    distribution (possibly empty, contributing nothing).
    """
    load: dict[str, float] = {}
    for node, volume in traffic.items():
        if volume < 0:
            raise InputError(f"negative traffic volume for node {node}")
        if node not in probs:
            raise InputError(f"traffic for node {node} which has no distribution")
        for ingress, p in probs[node].items():
            load[ingress] = load.get(ingress, 0.0) + volume * p
    return load


def catchment_bounds(
    routes: Mapping[int, "str | None"],
    ingress_points: tuple[str, ...] | list[str],
    total: int,
) -> dict[str, tuple[int, int]]:
    """Per-ingress [lower, upper] bounds on catchment size.

    ``routes`` must cover exactly the nodes being counted (the reporting
    universe) and ``total`` is its size. The lower bound counts nodes pinned
    to the ingress; the upper bound concedes every node not pinned
    elsewhere.
    """
    if total != len(routes):
        raise InputError(
            f"total {total} does not match the {len(routes)} nodes covered"
        )
    lower = {m: 0 for m in ingress_points}
    for node, ingress in routes.items():
        if ingress is None:
            continue
        if ingress not in lower:
            raise InputError(f"node {node} pinned to unknown ingress {ingress!r}")
        lower[ingress] += 1
    pinned = sum(lower.values())
    return {
        m: (lower[m], total - (pinned - lower[m]))
        for m in ingress_points
    }

"""Refining inferred catchments with measured ground truth.

A measurement oracle pins one node to one ingress. Applying it does more
than record the fact: certainty propagates upward (when only one possible
next hop could have produced the observation) and downward (when a node's
possible next hops all became certain and agree). The propagation touches
each node at most once per application.

For posterior distributions conditioned on a set of observations there are
two routes: exact enumeration of every tie-break combination (small graphs
only) and Monte Carlo rejection sampling.
"""
from __future__ import annotations

import bisect
import csv
import io
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import (
    CapacityError,
    ContradictionError,
    InfeasibleOracleError,
    InputError,
    TopologyParseError,
    UnknownNodeError,
)
from .inference import (
    RouteProbabilities,
    RoutingFunction,
    TieProbabilities,
    _validated_tie_probs,
)
from .rgraph import RGraph, topological_order

logger = logging.getLogger(__name__)

PROVENANCE_TAGS = ("bgp-rib", "traceroute", "ping", "synthetic")


@dataclass(frozen=True)
class OracleSet:
    """Measured node-to-ingress observations, each tagged with a source."""

    assignments: Mapping[int, str]
    provenance: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignments", dict(self.assignments))
        prov = dict(self.provenance)
        for node in self.assignments:
            prov.setdefault(node, "synthetic")
        for node, tag in prov.items():
            if tag not in PROVENANCE_TAGS:
                raise InputError(
                    f"unknown provenance {tag!r} for node {node}; "
                    f"expected one of {', '.join(PROVENANCE_TAGS)}"
                )
            if node not in self.assignments:
                raise InputError(f"provenance for unobserved node {node}")
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return len(self.assignments)

    def __bool__(self) -> bool:
        return bool(self.assignments)

    def items(self) -> Iterator[tuple[int, str]]:
        return iter(sorted(self.assignments.items()))

    def merged_with(self, other: "OracleSet") -> "OracleSet":
        """Union of two observation sets; conflicting duplicates are an error."""
        assignments = dict(self.assignments)
        provenance = dict(self.provenance)
        for node, ingress in other.assignments.items():
            if node in assignments and assignments[node] != ingress:
                raise ContradictionError(
                    f"node {node} observed at both {assignments[node]!r} "
                    f"and {ingress!r}"
                )
            assignments[node] = ingress
            provenance[node] = other.provenance[node]
        return OracleSet(assignments, provenance)


def parse_oracle_file(text: str) -> OracleSet:
    """Parse observation lines.

    Plain form: ``node,ingress[,provenance]``. Path form:
    ``path:<space-separated nodes>,ingress[,provenance]`` which pins every
    node on the path, since each of them forwards along the same suffix.
    ``#`` starts a comment. Repeating a node with a different ingress is a
    parse error.

    >>> o = parse_oracle_file("7,m1,ping\\npath:8 5 2,m2\\n")
    >>> assert o.assignments == {7: "m1", 8: "m2", 5: "m2", 2: "m2"}
    >>> assert o.provenance[5] == "traceroute"
    """
    assignments: dict[int, str] = {}
    provenance: dict[int, str] = {}

    def record(node: int, ingress: str, tag: str, line_no: int) -> None:
        if tag not in PROVENANCE_TAGS:
            raise TopologyParseError(
                f"unknown provenance {tag!r}; expected one of "
                f"{', '.join(PROVENANCE_TAGS)}",
                line_no,
            )
        if node in assignments and assignments[node] != ingress:
            raise TopologyParseError(
                f"node {node} assigned to both {assignments[node]!r} "
                f"and {ingress!r}",
                line_no,
            )
        assignments[node] = ingress
        provenance[node] = tag

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3) or not parts[1]:
            raise TopologyParseError(
                f"expected node,ingress[,provenance], got {raw!r}", line_no
            )
        ingress = parts[1]
        if parts[0].startswith("path:"):
            tag = parts[2] if len(parts) == 3 else "traceroute"
            try:
                nodes = [int(tok) for tok in parts[0][len("path:"):].split()]
            except ValueError:
                raise TopologyParseError(
                    f"non-integer node in path {parts[0]!r}", line_no
                ) from None
            if not nodes:
                raise TopologyParseError("empty path", line_no)
            for node in nodes:
                record(node, ingress, tag, line_no)
        else:
            tag = parts[2] if len(parts) == 3 else "synthetic"
            try:
                node = int(parts[0])
            except ValueError:
                raise TopologyParseError(
                    f"non-integer node id {parts[0]!r}", line_no
                ) from None
            record(node, ingress, tag, line_no)
    return OracleSet(assignments, provenance)


def serialize_oracles(oracles: OracleSet) -> str:
    """CSV rows ``node,ingress,provenance``; round-trips single-node lines."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    for node, ingress in oracles.items():
        writer.writerow([node, ingress, oracles.provenance[node]])
    return buf.getvalue()


@dataclass(frozen=True)
class OracleApplication:
    """Result of folding observations into an inference state.

    Unpacks as ``(routes, probs)``. ``set_route_calls`` counts propagation
    steps (bounded by the node count); ``skipped`` lists observations
    dropped for contradicting existing certainty when downgrading is on.
    ``stale_probability_nodes`` are nodes still uncertain, whose
    distributions were carried over unchanged from before the observations
    and therefore do not condition on them.
    """

    routes: RoutingFunction
    probs: RouteProbabilities
    set_route_calls: int = 0
    skipped: tuple[tuple[int, str], ...] = ()
    stale_probability_nodes: frozenset[int] = frozenset()

    def __iter__(self) -> Iterator:
        return iter((self.routes, self.probs))


def apply_oracles(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    oracles: OracleSet | Mapping[int, str],
    *,
    on_contradiction: str = "error",
) -> OracleApplication:
    """Pin observed nodes and propagate the certainty both ways.

    Upward: if exactly one parent of an observed node could have carried
    its ingress, that parent is pinned too. Downward: a node whose parents
    all became pinned to the same ingress is pinned. Inputs are not
    mutated. Applying the same observations again changes nothing, and the
    resulting certain set does not depend on observation order.

    Raises ContradictionError when an observation disagrees with an
    already-certain node (``on_contradiction="skip"`` downgrades that to a
    warning) and InfeasibleOracleError when an observation has probability
    zero under the current distributions.
    """
    if on_contradiction not in ("error", "skip"):
        raise InputError(f"on_contradiction must be 'error' or 'skip', got {on_contradiction!r}")
    if not isinstance(oracles, OracleSet):
        oracles = OracleSet(oracles)
    known_ingresses = set(g.ingress_map.values())
    new_routes = dict(routes)
    new_probs = {node: dict(dist) for node, dist in probs.items()}
    calls = 0
    skipped: list[tuple[int, str]] = []

    for node, ingress in oracles.items():
        if node not in g.parents:
            raise UnknownNodeError(f"observed node {node} not in forwarding graph")
        if ingress not in known_ingresses:
            raise UnknownNodeError(f"observation names unknown ingress {ingress!r}")
        current = new_routes.get(node)
        if current is not None and current != ingress:
            if on_contradiction == "skip":
                logger.warning(
                    "dropping observation %d->%s: node already pinned to %s",
                    node, ingress, current,
                )
                skipped.append((node, ingress))
                continue
            raise ContradictionError(
                f"observation pins node {node} to {ingress!r} but it is "
                f"certainly routed to {current!r}"
            )
        if current != ingress and new_probs.get(node, {}).get(ingress, 0.0) == 0.0:
            raise InfeasibleOracleError(
                f"observation {node}->{ingress!r} has probability zero"
            )

        # depth-first propagation; each entry re-checks on pop because an
        # earlier branch may already have resolved it
        stack: list[tuple[int, str]] = [(node, ingress)]
        while stack:
            current_node, current_ingress = stack.pop()
            already = new_routes.get(current_node)
            if already is not None:
                if already != current_ingress:
                    raise ContradictionError(
                        f"propagation would pin node {current_node} to both "
                        f"{already!r} and {current_ingress!r}"
                    )
                continue
            calls += 1
            new_routes[current_node] = current_ingress
            new_probs[current_node] = {current_ingress: 1.0}

            carriers = [
                p
                for p in g.parents[current_node]
                if new_probs.get(p, {}).get(current_ingress, 0.0) > 0.0
            ]
            if len(carriers) == 1 and new_routes.get(carriers[0]) is None:
                stack.append((carriers[0], current_ingress))

            for child in g.children[current_node]:
                if new_routes.get(child) is not None:
                    continue
                parent_routes = {new_routes.get(p) for p in g.parents[child]}
                if len(parent_routes) == 1:
                    (only,) = parent_routes
                    if only is not None:
                        stack.append((child, only))

    stale = frozenset(
        n for n in g.nodes if n != g.root and new_routes.get(n) is None
    )
    return OracleApplication(
        routes=new_routes,
        probs=new_probs,
        set_route_calls=calls,
        skipped=tuple(skipped),
        stale_probability_nodes=stale,
    )


# -- conditional distributions -------------------------------------------------

_MAX_EXACT_NODES = 14
_MAX_OUTCOMES = 2_000_000


def enumerate_route_outcomes(
    g: RGraph,
    tie_probs: TieProbabilities | None = None,
    max_outcomes: int = _MAX_OUTCOMES,
) -> Iterator[tuple[float, dict[int, "str | None"]]]:
    """Yield (probability, node-to-ingress map) for every tie-break choice.

    Each outcome fixes one parent per node; its probability is the product
    of the tie probabilities. A node directly attached to the root always
    takes the direct edge — its ingress is the scenario's ground truth, not
    a tie to roll — so it contributes no randomness. Zero-probability
    outcomes are skipped. Unreachable nodes and the root map to None.
    """
    probs_of = _validated_tie_probs(g, tie_probs)
    order = topological_order(g)
    choosers: list[int] = []
    domains: list[tuple[int, ...]] = []
    count = 1
    for n in order:
        parents = g.parents[n]
        if not parents:
            continue
        if g.root in parents:
            domains.append((g.root,))
        else:
            domains.append(parents)
            count *= len(parents)
            if count > max_outcomes:
                raise CapacityError(
                    f"more than {max_outcomes} tie-break combinations to enumerate"
                )
        choosers.append(n)
    base: dict[int, str | None] = {
        n: None for n in g.nodes if not g.parents[n]
    }
    for combo in itertools.product(*domains):
        weight = 1.0
        for n, choice in zip(choosers, combo):
            if choice != g.root:
                weight *= probs_of[n][choice]
        if weight == 0.0:
            continue
        ingress_of = dict(base)
        for n, choice in zip(choosers, combo):
            if choice == g.root:
                ingress_of[n] = g.ingress_map[n]
            else:
                ingress_of[n] = ingress_of[choice]
        yield weight, ingress_of


def _check_observed(g: RGraph, oracles: OracleSet | Mapping[int, str]) -> list[tuple[int, str]]:
    if not isinstance(oracles, OracleSet):
        oracles = OracleSet(oracles) if oracles else None
    pairs = list(oracles.items()) if oracles else []
    for node, ingress in pairs:
        if node not in g.parents:
            raise UnknownNodeError(f"observed node {node} not in forwarding graph")
        if ingress not in set(g.ingress_map.values()):
            raise UnknownNodeError(f"observation names unknown ingress {ingress!r}")
    return pairs


def exact_conditional_distribution(
    g: RGraph,
    tie_probs: TieProbabilities | None = None,
    oracles: OracleSet | Mapping[int, str] | None = None,
) -> RouteProbabilities:
    """Exact per-node posterior given the observations, by full enumeration.

    Conditions the tie-break outcome space on agreement with every
    observation and renormalizes. With no observations this equals the
    forward probabilistic pass. Guarded to graphs of at most 14 nodes.
    """
    if len(g.nodes) > _MAX_EXACT_NODES:
        raise CapacityError(
            f"exact conditioning limited to {_MAX_EXACT_NODES} nodes, "
            f"got {len(g.nodes)}"
        )
    observed = _check_observed(g, oracles or {})
    mass: dict[int, dict[str, float]] = {n: {} for n in g.nodes}
    total = 0.0
    for weight, ingress_of in enumerate_route_outcomes(g, tie_probs):
        if any(ingress_of[x] != m for x, m in observed):
            continue
        total += weight
        for n, ingress in ingress_of.items():
            if ingress is not None:
                mass[n][ingress] = mass[n].get(ingress, 0.0) + weight
    if total == 0.0:
        raise InfeasibleOracleError("observations rule out every tie-break outcome")
    return {
        n: {ingress: w / total for ingress, w in dist.items()}
        for n, dist in mass.items()
    }


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Empirical conditional distribution from rejection sampling."""

    probs: RouteProbabilities
    trials: int
    accepted: int

    def __iter__(self) -> Iterator:
        return iter((self.probs, self.trials, self.accepted))


def monte_carlo_inference(
    g: RGraph,
    tie_probs: TieProbabilities | None = None,
    trials: int = 10_000,
    seed: int = 0,
    oracles: OracleSet | Mapping[int, str] | None = None,
) -> MonteCarloEstimate:
    """Sample tie-break outcomes, reject those contradicting observations.

    Deterministic for a given seed. Raises InfeasibleOracleError when every
    trial is rejected.
    """
    if trials < 1:
        raise InputError(f"need at least one trial, got {trials}")
    observed = _check_observed(g, oracles or {})
    probs_of = _validated_tie_probs(g, tie_probs)
    order = topological_order(g)
    base: dict[int, str | None] = {n: None for n in g.nodes if not g.parents[n]}

    # per chooser: parent tuple and cumulative weights for inverse sampling;
    # root-attached nodes always take the direct edge (ground truth, no draw)
    schedule: list[tuple[int, tuple[int, ...], list[float]]] = []
    for n in order:
        parents = g.parents[n]
        if not parents:
            continue
        if g.root in parents:
            schedule.append((n, (g.root,), [1.0]))
            continue
        acc, cum = 0.0, []
        for p in parents:
            acc += probs_of[n][p]
            cum.append(acc)
        schedule.append((n, parents, cum))

    rng = random.Random(seed)
    counts: dict[int, dict[str, int]] = {n: {} for n in g.nodes}
    accepted = 0
    for _ in range(trials):
        ingress_of = dict(base)
        for n, parents, cum in schedule:
            if len(parents) > 1:
                idx = bisect.bisect_right(cum, rng.random())
                choice = parents[min(idx, len(parents) - 1)]
            else:
                choice = parents[0]
            if choice == g.root:
                ingress_of[n] = g.ingress_map[n]
            else:
                ingress_of[n] = ingress_of[choice]
        if any(ingress_of[x] != m for x, m in observed):
            continue
        accepted += 1
        for n, ingress in ingress_of.items():
            if ingress is not None:
                counts[n][ingress] = counts[n].get(ingress, 0) + 1
    if accepted == 0:
        raise InfeasibleOracleError(
            f"all {trials} sampled outcomes contradict the observations"
        )
    probs = {
        n: {ingress: c / accepted for ingress, c in dist.items()}
        for n, dist in counts.items()
    }
    return MonteCarloEstimate(probs=probs, trials=trials, accepted=accepted)

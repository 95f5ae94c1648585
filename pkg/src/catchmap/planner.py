"""Choosing which nodes to measure under a budget.

The quantity being maximized is the expected number of nodes whose ingress
becomes certain once the measurement outcomes are folded back in. The
outcome of measuring a node is not known in advance, so the planner keeps
one branch per possible combination of outcomes, each carrying its own
refined inference state and probability.

The objective is monotone but neither submodular nor supermodular — the two
witness fixtures at the bottom exhibit both failures — so the greedy plan
carries no approximation guarantee. It is compared against the exhaustive
optimum and random baselines instead.
"""
from __future__ import annotations

import itertools
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import CapacityError, InputError, UnknownNodeError
from .inference import (
    RouteProbabilities,
    RoutingFunction,
    TieProbabilities,
    probabilistic_inference,
)
from .oracles import OracleSet, apply_oracles, enumerate_route_outcomes
from .rgraph import RGraph

logger = logging.getLogger(__name__)

_MAX_EXACT_NODES = 14
_MAX_EXACT_MEASUREMENTS = 6


@dataclass(frozen=True)
class ObjectiveWeights:
    """Per-node contribution to the objective and per-node measurement cost.

    Nodes absent from either mapping default to weight 1 and cost 1, so the
    unweighted objective is simply the number of certain nodes.
    """

    weights: Mapping[int, float] = field(default_factory=dict)
    costs: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for node, w in self.weights.items():
            if w < 0:
                raise InputError(f"negative weight for node {node}")
        for node, c in self.costs.items():
            if c <= 0:
                raise InputError(f"non-positive measurement cost for node {node}")

    def weight(self, node: int) -> float:
        return self.weights.get(node, 1.0)

    def cost(self, node: int) -> float:
        return self.costs.get(node, 1.0)


def _certain_value(
    g: RGraph, routes: RoutingFunction, weights: ObjectiveWeights
) -> float:
    return sum(
        weights.weight(n) for n in g.report_nodes if routes.get(n) is not None
    )


def conditional_nc(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    observations: OracleSet | Mapping[int, str],
    weights: ObjectiveWeights | None = None,
) -> float:
    """Objective value after folding in one concrete set of outcomes."""
    weights = weights or ObjectiveWeights()
    applied = apply_oracles(g, routes, probs, observations)
    return _certain_value(g, applied.routes, weights)


# -- branch bookkeeping ---------------------------------------------------------


@dataclass
class _Branch:
    prob: float
    routes: RoutingFunction
    probs: RouteProbabilities


def _initial_branches(
    routes: RoutingFunction, probs: RouteProbabilities
) -> list[_Branch]:
    return [_Branch(1.0, dict(routes), {n: dict(d) for n, d in probs.items()})]


def _extend_branches(
    g: RGraph,
    branches: list[_Branch],
    node: int,
    tie_probs: TieProbabilities | None,
) -> list[_Branch]:
    """Split every branch on the possible outcomes of measuring ``node``.

    Each outcome is folded in and the distributions of still-uncertain nodes
    are recomputed forward with the original tie probabilities (their parent
    sets are untouched by new certainty). Zero-probability outcomes are
    dropped. Measuring a node with no possible route changes nothing.
    """
    out: list[_Branch] = []
    for branch in branches:
        dist = branch.probs.get(node) or {}
        if not dist:
            out.append(branch)
            continue
        for ingress, p in sorted(dist.items()):
            if p == 0.0:
                continue
            applied = apply_oracles(g, branch.routes, branch.probs, {node: ingress})
            refreshed = probabilistic_inference(g, applied.routes, tie_probs)
            out.append(_Branch(branch.prob * p, applied.routes, refreshed))
    return out


def _branch_value(
    g: RGraph, branches: list[_Branch], weights: ObjectiveWeights
) -> float:
    return sum(b.prob * _certain_value(g, b.routes, weights) for b in branches)


# -- expected objective ----------------------------------------------------------


def expected_nc(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    measured: Iterable[int],
    *,
    mode: str = "approx",
    tie_probs: TieProbabilities | None = None,
    weights: ObjectiveWeights | None = None,
) -> float:
    """Expected objective after measuring the given nodes.

    ``approx`` replays the planner's own branch bookkeeping (measurements
    applied in ascending node order). ``exact`` enumerates the full
    tie-break outcome space, conditions it on already-pinned routes, and
    scores each joint measurement outcome by which nodes are forced to a
    single ingress; guarded to 14 nodes and 6 measured nodes.
    """
    weights = weights or ObjectiveWeights()
    measured = sorted(set(measured))
    for node in measured:
        if node not in g.parents:
            raise UnknownNodeError(f"measured node {node} not in forwarding graph")
    if mode == "approx":
        branches = _initial_branches(routes, probs)
        for node in measured:
            branches = _extend_branches(g, branches, node, tie_probs)
        return _branch_value(g, branches, weights)
    if mode != "exact":
        raise InputError(f"mode must be 'approx' or 'exact', got {mode!r}")

    if len(g.nodes) > _MAX_EXACT_NODES:
        raise CapacityError(
            f"exact mode limited to {_MAX_EXACT_NODES} nodes, got {len(g.nodes)}"
        )
    if len(measured) > _MAX_EXACT_MEASUREMENTS:
        raise CapacityError(
            f"exact mode limited to {_MAX_EXACT_MEASUREMENTS} measured nodes, "
            f"got {len(measured)}"
        )
    pinned = [(n, m) for n, m in sorted(routes.items()) if m is not None]

    # per joint outcome of the measured nodes: accumulated mass, and for every
    # reporting node either its constant ingress or a conflict marker
    signatures: dict[tuple, dict] = {}
    total = 0.0
    for mass, ingress_of in enumerate_route_outcomes(g, tie_probs):
        if any(ingress_of[n] != m for n, m in pinned):
            continue
        total += mass
        sig = tuple(ingress_of[n] for n in measured)
        entry = signatures.setdefault(sig, {"mass": 0.0, "values": {}})
        entry["mass"] += mass
        values = entry["values"]
        for n in g.report_nodes:
            current = ingress_of[n]
            if n not in values:
                values[n] = current
            elif values[n] != current:
                values[n] = _CONFLICT
    if total == 0.0:
        raise InputError("pinned routes are inconsistent with the forwarding graph")

    value = 0.0
    for entry in signatures.values():
        nc = sum(
            weights.weight(n)
            for n, v in entry["values"].items()
            if v is not None and v is not _CONFLICT
        )
        value += (entry["mass"] / total) * nc
    return value


_CONFLICT = object()


# -- plans -----------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementPlan:
    """An ordered selection of nodes to measure.

    ``step_values`` holds the expected objective after each selection (same
    length as ``selected``); ``baseline_value`` is the objective with no
    measurements at all. ``notes`` records candidates that were set aside
    and other planner remarks.
    """

    selected: tuple[int, ...]
    step_values: tuple[float, ...]
    baseline_value: float
    budget: float
    method: str
    notes: tuple[str, ...] = ()

    @property
    def expected_value(self) -> float:
        return self.step_values[-1] if self.step_values else self.baseline_value


def _prepare_candidates(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    candidates: Iterable[int],
) -> tuple[list[int], list[str]]:
    notes: list[str] = []
    cleaned: list[int] = []
    for node in sorted(set(candidates)):
        if node not in g.parents:
            raise UnknownNodeError(f"candidate node {node} not in forwarding graph")
        if node == g.root:
            notes.append(f"candidate {node} is the destination itself; ignored")
            continue
        if routes.get(node) is None and not probs.get(node):
            notes.append(f"candidate {node} has no possible route; ignored")
            continue
        cleaned.append(node)
    return cleaned, notes


def greedy_plan(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    candidates: Iterable[int],
    budget: float,
    *,
    tie_probs: TieProbabilities | None = None,
    weights: ObjectiveWeights | None = None,
) -> MeasurementPlan:
    """Pick measurements one at a time, each maximizing the expected objective.

    Ties go to the smallest node id. Selection stops when the budget cannot
    afford any remaining candidate. Nodes that cannot be usefully measured
    (the destination, unreachable nodes) are set aside with a note.
    """
    if budget < 0:
        raise InputError(f"budget must be non-negative, got {budget}")
    weights = weights or ObjectiveWeights()
    pool, notes = _prepare_candidates(g, routes, probs, candidates)
    baseline = _certain_value(g, routes, weights)
    if not pool and budget > 0:
        notes.append("no measurable candidates; empty plan")

    branches = _initial_branches(routes, probs)
    selected: list[int] = []
    step_values: list[float] = []
    remaining = float(budget)
    while True:
        affordable = [n for n in pool if n not in selected and weights.cost(n) <= remaining]
        if not affordable:
            break
        best_node, best_value, best_branches = None, -math.inf, None
        for node in affordable:
            trial = _extend_branches(g, branches, node, tie_probs)
            value = _branch_value(g, trial, weights)
            if value > best_value:
                best_node, best_value, best_branches = node, value, trial
        selected.append(best_node)
        step_values.append(best_value)
        branches = best_branches
        remaining -= weights.cost(best_node)
    return MeasurementPlan(
        selected=tuple(selected),
        step_values=tuple(step_values),
        baseline_value=baseline,
        budget=budget,
        method="greedy",
        notes=tuple(notes),
    )


def exhaustive_plan(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    candidates: Iterable[int],
    budget: float,
    *,
    tie_probs: TieProbabilities | None = None,
    weights: ObjectiveWeights | None = None,
    max_subsets: int = 20_000,
) -> MeasurementPlan:
    """Evaluate every affordable candidate subset exactly; return the best.

    Ground truth for benchmarking the greedy plan, so it scores subsets in
    exact mode and inherits its size guards. Ties prefer fewer measurements,
    then the lexicographically smallest subset.
    """
    if budget < 0:
        raise InputError(f"budget must be non-negative, got {budget}")
    weights = weights or ObjectiveWeights()
    pool, notes = _prepare_candidates(g, routes, probs, candidates)
    baseline = _certain_value(g, routes, weights)

    feasible: list[tuple[int, ...]] = []
    for size in range(0, len(pool) + 1):
        if size > _MAX_EXACT_MEASUREMENTS:
            notes.append(
                f"subsets larger than {_MAX_EXACT_MEASUREMENTS} not evaluated "
                f"(exact-mode guard)"
            )
            break
        for subset in itertools.combinations(pool, size):
            if sum(weights.cost(n) for n in subset) <= budget:
                feasible.append(subset)
                if len(feasible) > max_subsets:
                    raise CapacityError(
                        f"more than {max_subsets} candidate subsets to evaluate"
                    )

    best_subset, best_value = (), baseline
    for subset in feasible:
        value = expected_nc(
            g, routes, probs, subset,
            mode="exact", tie_probs=tie_probs, weights=weights,
        )
        if value > best_value + 1e-12 or (
            abs(value - best_value) <= 1e-12
            and (len(subset), subset) < (len(best_subset), best_subset)
        ):
            best_subset, best_value = subset, value

    step_values = tuple(
        expected_nc(
            g, routes, probs, best_subset[: k + 1],
            mode="exact", tie_probs=tie_probs, weights=weights,
        )
        for k in range(len(best_subset))
    )
    return MeasurementPlan(
        selected=best_subset,
        step_values=step_values,
        baseline_value=baseline,
        budget=budget,
        method="exhaustive",
        notes=tuple(notes),
    )


def random_plan_values(
    g: RGraph,
    routes: RoutingFunction,
    probs: RouteProbabilities,
    candidates: Iterable[int],
    budget: float,
    count: int,
    seed: int = 0,
    *,
    mode: str = "exact",
    tie_probs: TieProbabilities | None = None,
    weights: ObjectiveWeights | None = None,
) -> list[float]:
    """Expected objective of ``count`` uniformly drawn budget-sized plans.

    Baseline distribution for judging the greedy plan. Assumes unit costs
    when sizing the drawn subsets.
    """
    weights = weights or ObjectiveWeights()
    pool, _ = _prepare_candidates(g, routes, probs, candidates)
    rng = random.Random(seed)
    size = min(int(budget), len(pool))
    values = []
    for _ in range(count):
        subset = rng.sample(pool, size) if size else []
        values.append(
            expected_nc(
                g, routes, probs, subset,
                mode=mode, tie_probs=tie_probs, weights=weights,
            )
        )
    return values


def export_plan_csv(plan: MeasurementPlan) -> str:
    """CSV rows ``rank,node,expected_nc_after``."""
    lines = ["rank,node,expected_nc_after"]
    for rank, (node, value) in enumerate(
        zip(plan.selected, plan.step_values), start=1
    ):
        lines.append(f"{rank},{node},{value!r}")
    return "\n".join(lines) + "\n"


# -- objective-shape witnesses ---------------------------------------------------


def nonsupermodularity_witness(
    p: float = 0.6, q: float = 0.5
) -> tuple[RGraph, dict[int, dict[int, float]]]:
    """Fixture where a measurement helps less after another one.

    Two pinned attachment nodes (1 and 2), an uncertain node 3 hanging off
    both, and an uncertain node 4 fed by 3 and 2. Measuring 3 alone gains
    2 - p; measuring it after 4 gains only 1 - p*q.
    """
    g = RGraph.from_edges(
        0,
        [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (2, 4)],
        {1: "m1", 2: "m2"},
    )
    tie_probs = {
        1: {0: 1.0},
        2: {0: 1.0},
        3: {1: p, 2: 1.0 - p},
        4: {3: q, 2: 1.0 - q},
    }
    return g, tie_probs


def nonsubmodularity_witness(
    p1: float = 0.5, p2: float = 0.5, r: float = 0.5
) -> tuple[RGraph, dict[int, dict[int, float]]]:
    """Fixture where a measurement helps more after another one.

    Nodes 3 and 4 each hang off both attachments; node 5 hangs off 3 and 4.
    Measuring 3 alone gains 1; measuring it after 4 gains
    1 + P(3 and 4 agree).
    """
    g = RGraph.from_edges(
        0,
        [(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 5), (4, 5)],
        {1: "m1", 2: "m2"},
    )
    tie_probs = {
        1: {0: 1.0},
        2: {0: 1.0},
        3: {1: p1, 2: 1.0 - p1},
        4: {1: p2, 2: 1.0 - p2},
        5: {3: r, 4: 1.0 - r},
    }
    return g, tie_probs

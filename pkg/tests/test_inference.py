"""Certain and probabilistic route inference, pruning, loads, bounds."""

from __future__ import annotations

import math

import pytest

from catchmap import (
    RGraph,
    build_rgraph,
    catchment_bounds,
    certain_inference,
    expected_load,
    probabilistic_inference,
    shortest_path_transform,
    uniform_tie_probabilities,
)
from catchmap.errors import InputError

import helpers

TOL = 1e-9


def close(a, b):
    return math.isclose(a, b, abs_tol=TOL)


def test_example_routing_table(example_routes):
    assert example_routes == {**helpers.EXPECTED_ROUTES, helpers.DST: None}


def test_chain_all_certain():
    g = RGraph.from_edges(0, [(0, 1), (1, 2), (2, 3)], {1: "m"})
    routes = certain_inference(g)
    assert routes == {0: None, 1: "m", 2: "m", 3: "m"}


def test_attachments_always_certain():
    for idx in range(20):
        aug = helpers.random_instance(idx)
        g = build_rgraph(aug, seed=0)
        routes = certain_inference(g)
        for node, label in g.ingress_map.items():
            assert routes[node] == label


def test_example_route_probabilities(example_graph, example_routes):
    probs = probabilistic_inference(example_graph, example_routes)
    for node, expected in helpers.EXPECTED_PROBS.items():
        got = probs[node]
        assert set(got) == set(expected)
        for m, p in expected.items():
            assert close(got[m], p), (node, m, got)


def test_certain_nodes_probability_one(example_graph, example_routes, example_probs):
    for node, m in example_routes.items():
        if m is not None:
            assert example_probs[node] == {m: 1.0}


def test_probabilities_normalized_on_random_instances():
    for idx in range(25):
        aug = helpers.random_instance(idx)
        g = build_rgraph(aug, seed=0)
        routes = certain_inference(g)
        probs = probabilistic_inference(g, routes)
        for node in g.report_nodes:
            dist = probs[node]
            assert all(p >= 0 for p in dist.values())
            if dist:
                assert sum(dist.values()) <= 1.0 + TOL


def test_uniform_tie_probabilities(example_graph):
    ties = uniform_tie_probabilities(example_graph)
    assert ties[4] == {1: 0.5, 2: 0.5}
    assert ties[8] == {5: 0.5, 6: 0.5}
    for node, dist in ties.items():
        assert close(sum(dist.values()), 1.0)


def test_custom_tie_probabilities_shift_mass(example_graph, example_routes):
    ties = uniform_tie_probabilities(example_graph)
    ties[4] = {1: 1.0, 2: 0.0}
    probs = probabilistic_inference(example_graph, example_routes, ties)
    assert close(probs[4]["m1"], 1.0)
    # node 8 = 0.5 via 5 (m2) + 0.5 via 6 -> 4 (now all m1)
    assert close(probs[8]["m1"], 0.5)
    assert close(probs[8]["m2"], 0.5)


def test_tie_probabilities_validated(example_graph, example_routes):
    bad_sum = {4: {1: 0.6, 2: 0.6}}
    with pytest.raises(InputError):
        probabilistic_inference(example_graph, example_routes, bad_sum)
    negative = {4: {1: 1.5, 2: -0.5}}
    with pytest.raises(InputError):
        probabilistic_inference(example_graph, example_routes, negative)
    wrong_support = {4: {1: 0.5, 7: 0.5}}
    with pytest.raises(InputError):
        probabilistic_inference(example_graph, example_routes, wrong_support)


class TestShortestPathTransform:
    def test_example_drop_set(self, example_graph):
        pruned = shortest_path_transform(example_graph)
        dropped = set(example_graph.edges()) - set(pruned.edges())
        assert dropped == set(helpers.EXPECTED_SP_DROPPED)

    def test_chain_untouched(self):
        g = RGraph.from_edges(0, [(0, 1), (1, 2), (2, 3)], {1: "m"})
        assert set(shortest_path_transform(g).edges()) == set(g.edges())

    def test_new_certainty_on_example(self, example_graph):
        pruned = shortest_path_transform(example_graph)
        routes = certain_inference(pruned)
        # with the long detours gone, node 8 must follow node 5
        assert routes[8] == "m2"
        assert routes[4] is None
        assert routes[6] is None

    def test_certainty_never_lost(self):
        for idx in range(30):
            aug = helpers.random_instance(idx, num_nodes=6 + idx % 7)
            g = build_rgraph(aug, seed=0)
            before = certain_inference(g)
            after = certain_inference(shortest_path_transform(g))
            for node in g.report_nodes:
                if before[node] is not None:
                    assert after[node] == before[node], (idx, node)

    def test_unreachable_nodes_keep_their_edges(self):
        g = RGraph.from_parent_map(0, {1: "m"}, {1: [0], 3: [2]}, nodes=[2, 3])
        # nodes 2 and 3 form a detached island: both levels stay infinite;
        # the transform must leave that corner alone rather than crash
        pruned = shortest_path_transform(g)
        assert (2, 3) in set(pruned.edges())


class TestLoadsAndBounds:
    def test_example_loads(self, example_probs):
        traffic = {n: 1.0 for n in helpers.EXPECTED_ROUTES}
        loads = expected_load(
            {n: example_probs[n] for n in helpers.EXPECTED_ROUTES}, traffic
        )
        assert close(loads["m1"], helpers.EXPECTED_LOADS["m1"])
        assert close(loads["m2"], helpers.EXPECTED_LOADS["m2"])

    def test_loads_conserve_traffic(self, example_probs):
        traffic = {n: float(n) for n in helpers.EXPECTED_ROUTES}
        loads = expected_load(
            {n: example_probs[n] for n in helpers.EXPECTED_ROUTES}, traffic
        )
        assert close(sum(loads.values()), sum(traffic.values()))

    def test_negative_traffic_rejected(self, example_probs):
        with pytest.raises(InputError):
            expected_load({4: example_probs[4]}, {4: -1.0})

    def test_example_bounds(self, example_routes):
        routes = {n: example_routes[n] for n in helpers.EXPECTED_ROUTES}
        bounds = catchment_bounds(routes, ("m1", "m2"), len(routes))
        assert bounds == helpers.EXPECTED_BOUNDS

    def test_all_certain_collapses_bounds(self):
        routes = {1: "a", 2: "a", 3: "b"}
        bounds = catchment_bounds(routes, ("a", "b"), 3)
        assert bounds == {"a": (2, 2), "b": (1, 1)}

    def test_total_must_match(self, example_routes):
        routes = {n: example_routes[n] for n in helpers.EXPECTED_ROUTES}
        with pytest.raises(InputError):
            catchment_bounds(routes, ("m1", "m2"), 99)

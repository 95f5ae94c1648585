"""Shared builders and frozen expectations for the test suite.

The worked example is a nine-node provider hierarchy with the destination
(node 9) attached at nodes 1 and 2.  Every expectation below was derived by
hand from the forwarding model before the engine existed; tests compare the
engine's output against these constants, never the other way around.
"""

from __future__ import annotations

import random

from catchmap import (
    AugmentedTopology,
    DestinationSpec,
    Relationship,
    Topology,
    attach_destination,
    derive_vf_policies,
    generate_random_topology,
)

DST = 9

# (customer, provider) pairs: the customer learns the destination's route
# first and re-exports it upward, so each provider link is a forwarding edge.
EXAMPLE_CUSTOMER_LINKS = (
    (1, 3),
    (1, 4),
    (2, 4),
    (2, 5),
    (4, 6),
    (1, 7),
    (3, 7),
    (5, 8),
    (6, 8),
)

EXAMPLE_ATTACHMENTS = {1: "m1", 2: "m2"}

# Forwarding-graph edges as (parent, child): parent advertises to child.
EXPECTED_EDGES = frozenset(
    {(DST, 1), (DST, 2)} | {(c, p) for c, p in EXAMPLE_CUSTOMER_LINKS}
)

EXPECTED_ROUTES = {
    1: "m1",
    2: "m2",
    3: "m1",
    4: None,
    5: "m2",
    6: None,
    7: "m1",
    8: None,
}

EXPECTED_PROBS = {
    1: {"m1": 1.0},
    2: {"m2": 1.0},
    3: {"m1": 1.0},
    4: {"m1": 0.5, "m2": 0.5},
    5: {"m2": 1.0},
    6: {"m1": 0.5, "m2": 0.5},
    7: {"m1": 1.0},
    8: {"m1": 0.25, "m2": 0.75},
}

EXPECTED_PATHS_3 = frozenset({(3, 1, DST)})
EXPECTED_PATHS_8 = frozenset({(8, 5, 2, DST), (8, 6, 4, 1, DST), (8, 6, 4, 2, DST)})

EXPECTED_BOUNDS = {"m1": (3, 6), "m2": (2, 5)}
EXPECTED_LOADS = {"m1": 4.25, "m2": 3.75}

# Edges removed by the shortest-path pruning pass (levels: 1,2 at depth one;
# 3,4,5,7 at two; 6,8 at three).
EXPECTED_SP_DROPPED = frozenset({(3, 7), (6, 8)})

CERTAIN_COUNT = 5  # of 8 report nodes


def example_base_topology() -> Topology:
    topo = Topology()
    for customer, provider in EXAMPLE_CUSTOMER_LINKS:
        topo.add_edge(customer, provider, Relationship.C2P)
    return derive_vf_policies(topo)


def example_aug() -> AugmentedTopology:
    spec = DestinationSpec(attachments=dict(EXAMPLE_ATTACHMENTS), dst_id=DST)
    return attach_destination(example_base_topology(), spec)


def random_instance(
    idx: int,
    *,
    num_nodes: int | None = None,
    avg_degree: float = 2.2,
    peer_fraction: float = 0.15,
    seed_base: int = 7000,
    attach_by_degree: bool = False,
) -> AugmentedTopology:
    """Small random scenario with two ingress points, deterministic per idx."""
    seed = seed_base + idx
    n = num_nodes if num_nodes is not None else 6 + idx % 5
    topo = generate_random_topology(
        n, avg_degree=avg_degree, peer_fraction=peer_fraction, seed=seed
    )
    vf = derive_vf_policies(topo)
    if attach_by_degree:
        ranked = sorted(vf.nodes(), key=lambda x: (-len(vf.neighbors(x)), x))
        picks = ranked[:2]
    else:
        picks = sorted(random.Random(seed).sample(sorted(vf.nodes()), 2))
    spec = DestinationSpec(attachments={picks[0]: "m1", picks[1]: "m2"})
    return attach_destination(vf, spec)

"""Relationship model, parsers, destination attachment, generators."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catchmap import (
    DestinationSpec,
    Relationship,
    Topology,
    VF_LOCAL_PREF,
    apply_prepending,
    attach_destination,
    build_rgraph,
    derive_vf_policies,
    generate_random_topology,
    parse_caida_asrel,
    parse_topology,
    serialize_topology,
)
from catchmap.errors import (
    DestinationSpecError,
    EdgeConflictError,
    GenerationError,
    PolicyError,
    TopologyParseError,
    UnknownNodeError,
)

import helpers


class TestRelationships:
    def test_reversal_is_an_involution(self):
        for rel in Relationship:
            assert rel.reversed().reversed() == rel

    def test_peer_link_is_its_own_reverse(self):
        assert Relationship.P2P.reversed() == Relationship.P2P

    def test_customer_routes_most_preferred(self):
        assert (
            VF_LOCAL_PREF[Relationship.P2C]
            > VF_LOCAL_PREF[Relationship.P2P]
            > VF_LOCAL_PREF[Relationship.C2P]
        )

    def test_concrete_preference_values(self):
        assert VF_LOCAL_PREF[Relationship.P2C] == 3.0
        assert VF_LOCAL_PREF[Relationship.P2P] == 2.0
        assert VF_LOCAL_PREF[Relationship.C2P] == 1.0


class TestTopologyEdges:
    def test_edge_stores_both_directions(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        assert topo.relationship(1, 2) == Relationship.P2C
        assert topo.relationship(2, 1) == Relationship.C2P

    def test_conflicting_redeclaration_rejected(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        with pytest.raises(EdgeConflictError):
            topo.add_edge(1, 2, Relationship.P2P)

    def test_same_relationship_redeclaration_is_noop(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        topo.add_edge(2, 1, Relationship.C2P)
        assert topo.num_edges == 1

    def test_self_loop_rejected(self):
        topo = Topology()
        with pytest.raises(EdgeConflictError):
            topo.add_edge(3, 3, Relationship.P2P)

    def test_copy_is_independent(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        clone = topo.copy()
        clone.add_edge(2, 3, Relationship.P2P)
        assert topo.num_edges == 1
        assert clone.num_edges == 2


class TestPolicies:
    def test_preference_requires_derived_policies(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        with pytest.raises(PolicyError):
            topo.local_pref(1, 2)

    def test_customer_preferred_over_peer(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        topo.add_edge(1, 3, Relationship.P2P)
        vf = derive_vf_policies(topo)
        assert vf.local_pref(1, 2) == 3.0
        assert vf.local_pref(1, 3) == 2.0
        assert vf.local_pref(1, 2) > vf.local_pref(1, 3)

    def test_customer_learned_routes_exported_everywhere(self):
        # 2 is node 1's customer; 3 a peer; 4 a provider
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        topo.add_edge(1, 3, Relationship.P2P)
        topo.add_edge(1, 4, Relationship.C2P)
        vf = derive_vf_policies(topo)
        assert vf.exports(1, 2, 3)
        assert vf.exports(1, 2, 4)
        assert vf.exports(1, 2, 2)

    def test_provider_learned_routes_exported_only_to_customers(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        topo.add_edge(1, 3, Relationship.P2P)
        topo.add_edge(1, 4, Relationship.C2P)
        vf = derive_vf_policies(topo)
        assert vf.exports(1, 4, 2)
        assert not vf.exports(1, 4, 3)
        assert not vf.exports(1, 3, 4)

    def test_pref_override_wins(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2C)
        vf = derive_vf_policies(topo)
        vf.override_pref(1, 2, 0.5)
        assert vf.local_pref(1, 2) == 0.5

    def test_validate_flags_asymmetric_export_at_equal_pref(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2P)
        topo.add_edge(1, 3, Relationship.P2P)
        topo.add_edge(1, 4, Relationship.P2C)
        vf = derive_vf_policies(topo)
        vf.validate()
        vf.override_export(1, 2, 4, False)
        with pytest.raises(PolicyError):
            vf.validate()


class TestCaidaParser:
    def test_provider_customer_line(self):
        topo = parse_caida_asrel("1|2|-1\n")
        assert topo.relationship(1, 2) == Relationship.P2C
        assert topo.relationship(2, 1) == Relationship.C2P

    def test_peer_line(self):
        topo = parse_caida_asrel("1|2|0\n")
        assert topo.relationship(1, 2) == Relationship.P2P
        assert topo.relationship(2, 1) == Relationship.P2P

    def test_comments_and_blanks_skipped(self):
        topo = parse_caida_asrel("# serial-1\n\n10|20|-1\n")
        assert topo.num_edges == 1

    def test_bad_relationship_code_reports_line(self):
        with pytest.raises(TopologyParseError) as err:
            parse_caida_asrel("1|2|-1\n3|4|7\n")
        assert "line 2" in str(err.value)

    def test_malformed_line_reports_line(self):
        with pytest.raises(TopologyParseError) as err:
            parse_caida_asrel("1|2\n")
        assert "line 1" in str(err.value)

    def test_conflicting_duplicate_rejected(self):
        with pytest.raises(TopologyParseError):
            parse_caida_asrel("1|2|-1\n2|1|-1\n")


class TestCanonicalFormat:
    def test_round_trip_example(self):
        topo = helpers.example_base_topology()
        text = serialize_topology(topo)
        back = parse_topology(text)
        assert sorted(back.nodes()) == sorted(topo.nodes())
        for i in topo.nodes():
            for j in topo.neighbors(i):
                assert back.relationship(i, j) == topo.relationship(i, j)

    def test_unrecognized_line_reports_position(self):
        with pytest.raises(TopologyParseError) as err:
            parse_topology("# topology v1\nwhatever 1 2\n")
        assert "line 2" in str(err.value)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(min_value=4, max_value=24),
        seed=st.integers(min_value=0, max_value=2**20),
    )
    def test_round_trip_random(self, n, seed):
        topo = generate_random_topology(n, avg_degree=2.3, seed=seed)
        back = parse_topology(serialize_topology(topo))
        assert sorted(back.nodes()) == sorted(topo.nodes())
        assert back.num_edges == topo.num_edges
        for i in topo.nodes():
            for j in topo.neighbors(i):
                assert back.relationship(i, j) == topo.relationship(i, j)


class TestAttachDestination:
    def test_two_ingress_points(self):
        aug = helpers.example_aug()
        assert aug.n_dst == helpers.DST
        assert aug.ingress_map == {1: "m1", 2: "m2"}
        assert set(aug.ingress_points) == {"m1", "m2"}
        # destination attaches as a customer of each neighbor by default
        assert aug.topology.relationship(aug.n_dst, 1) == Relationship.C2P
        assert aug.topology.relationship(aug.n_dst, 2) == Relationship.C2P

    def test_real_nodes_exclude_destination(self):
        aug = helpers.example_aug()
        assert aug.n_dst not in aug.real_nodes
        assert set(aug.real_nodes) == set(range(1, 9))

    def test_moas_origins_become_ingress_points(self):
        topo = Topology()
        topo.add_edge(10, 20, Relationship.P2P)
        vf = derive_vf_policies(topo)
        aug = attach_destination(vf, DestinationSpec(moas_origins=(10, 20)))
        assert set(aug.ingress_map) == {10, 20}
        assert sorted(aug.ingress_map.values()) == ["10", "20"]

    def test_empty_spec_rejected(self):
        with pytest.raises(DestinationSpecError):
            DestinationSpec()

    def test_unknown_attachment_rejected(self):
        topo = derive_vf_policies(Topology())
        with pytest.raises(UnknownNodeError):
            attach_destination(topo, DestinationSpec(attachments={5: "m1"}))

    def test_attachment_relationship_configurable(self):
        topo = Topology()
        topo.add_edge(1, 2, Relationship.P2P)
        vf = derive_vf_policies(topo)
        spec = DestinationSpec(
            attachments={1: "m1"},
            attachment_rels={1: Relationship.P2P},
        )
        aug = attach_destination(vf, spec)
        assert aug.topology.relationship(aug.n_dst, 1) == Relationship.P2P


class TestPrepending:
    def test_zero_prepends_is_identity(self, example_aug):
        assert apply_prepending(example_aug, "m2", 0) is example_aug

    def test_chain_inserted_before_ingress(self, example_aug):
        aug = apply_prepending(example_aug, "m2", 2)
        assert len(aug.virtual_nodes) == 2
        v1, v2 = aug.virtual_nodes
        # destination -> v1 -> v2 -> original neighbor
        assert aug.topology.relationship(aug.n_dst, v1) == Relationship.C2P
        assert aug.topology.relationship(v1, v2) == Relationship.C2P
        assert aug.topology.relationship(v2, 2) == Relationship.C2P
        assert aug.ingress_map[v1] == "m2"
        assert 2 not in aug.ingress_map

    def test_unknown_ingress_rejected(self, example_aug):
        with pytest.raises(UnknownNodeError):
            apply_prepending(example_aug, "nope", 1)

    def test_forwarding_edges_on_original_nodes_unchanged(self, example_aug):
        base = build_rgraph(example_aug, seed=0)
        prepped = build_rgraph(apply_prepending(example_aug, "m2", 3), seed=0)
        original = set(example_aug.real_nodes)
        base_edges = {
            (p, c) for p, c in base.edges() if p in original and c in original
        }
        prep_edges = {
            (p, c) for p, c in prepped.edges() if p in original and c in original
        }
        assert base_edges == prep_edges


class TestGenerator:
    def test_deterministic_per_seed(self):
        a = generate_random_topology(8, seed=7)
        b = generate_random_topology(8, seed=7)
        assert serialize_topology(a) == serialize_topology(b)

    def test_edge_count_tracks_requested_degree(self):
        topo = generate_random_topology(50, avg_degree=3.0, seed=1)
        target = round(50 * 3.0 / 2)
        assert 49 <= topo.num_edges <= target

    def test_single_node(self):
        topo = generate_random_topology(1, seed=0)
        assert sorted(topo.nodes()) == [0] or topo.num_nodes == 1
        assert topo.num_edges == 0

    def test_impossible_density_rejected(self):
        with pytest.raises(GenerationError):
            generate_random_topology(4, avg_degree=40.0, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(min_value=4, max_value=40),
        seed=st.integers(min_value=0, max_value=2**20),
        peers=st.floats(min_value=0.0, max_value=0.5),
    )
    def test_generated_topologies_satisfy_invariants(self, n, seed, peers):
        topo = generate_random_topology(
            n, avg_degree=2.5, peer_fraction=peers, seed=seed
        )
        vf = derive_vf_policies(topo)
        vf.validate()  # antisymmetry + export consistency
        assert vf.num_nodes == n
        assert vf.num_edges >= n - 1  # spanning structure

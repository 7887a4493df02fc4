import json

import numpy as np
import pytest

from conftest import grid_instance, h_layout, make_instance
from locfree.clustergraph import (ClusterParams, annotate_edges, branch_counts, brute_force_cluster_edges,
                                  build_cluster_graph, build_clusters, cluster_by_labels,
                                  clustering_is_valid, degree_criterion, detect_boundary, node_location)
from locfree.netgen import corridor_layout, generate_network, paper_streets, plus_layout


@pytest.fixture(scope="module")
def corridor():
    return generate_network(corridor_layout(1))


@pytest.fixture(scope="module")
def plus():
    inst = generate_network(plus_layout(1))
    cl = build_clusters(inst.graph)
    return inst, cl, build_cluster_graph(cl, inst.graph)


@pytest.fixture(scope="module")
def streets():
    inst = generate_network(paper_streets(1))
    cl = build_clusters(inst.graph)
    return inst, cl, build_cluster_graph(cl, inst.graph)


# -- boundary -------------------------------------------------------------------

def test_corridor_rim_lies_near_the_border(corridor):
    b = detect_boundary(corridor.graph)
    x, y = corridor.positions.T
    to_border = np.minimum.reduce([x, 120 - x, y + 10, 10 - y])
    flagged = b.is_boundary
    assert flagged.any()
    assert np.mean(to_border[flagged] <= corridor.comm_radius) >= 0.9


def test_complete_graph_has_no_rim():
    inst = make_instance(np.random.default_rng(0).uniform(0, 3, (30, 2)), 10.0)
    b = detect_boundary(inst.graph)
    assert not b.is_boundary.any() and b.strips == []


def test_strips_partition_flagged_nodes(corridor):
    b = detect_boundary(corridor.graph)
    joined = np.sort(np.concatenate(b.strips))
    assert np.array_equal(joined, np.flatnonzero(b.is_boundary))
    assert set(b.strip_of[~b.is_boundary]) == {-1}


def test_paper_streets_corridors_carry_two_strips(streets):
    inst, cl, _ = streets
    b = detect_boundary(inst.graph)
    strip_of = b.strip_of
    for c, kind in cl.kind.items():
        if kind != "street":
            continue
        seen = set(strip_of[cl.members(c)]) - {-1}
        assert len(seen) >= 2, f"street {c} touches {len(seen)} strips"


def test_boundary_strategy_is_pluggable(corridor):
    b = detect_boundary(corridor.graph, criterion=lambda g, h: np.arange(g.n) < 10)
    assert b.is_boundary.sum() == 10
    with pytest.raises(ValueError):
        degree_criterion(1.5)
    with pytest.raises(ValueError):
        detect_boundary(corridor.graph, hop_horizon=0)


# -- clustering -----------------------------------------------------------------

def test_branch_counts_along_a_corridor(corridor):
    br = branch_counts(corridor.graph)
    x = corridor.positions[:, 0]
    assert np.mean(br[(x > 40) & (x < 80)] == 2) >= 0.9
    assert np.all(br <= 2)


def test_corridor_is_one_street(corridor):
    cl = build_clusters(corridor.graph)
    assert cl.n_clusters == 1 and cl.kind == {0: "street"}


@pytest.mark.parametrize("seed", range(1, 11))
def test_plus_layout_four_streets_one_intersection(seed):
    inst = generate_network(plus_layout(seed))
    cl = build_clusters(inst.graph)
    counts = cl.counts_by_kind()
    assert abs(counts["street"] - 4) <= 1 and abs(counts["intersection"] - 1) <= 1
    cg = build_cluster_graph(cl, inst.graph)
    assert set(cg.edges) == brute_force_cluster_edges(cl, inst.graph)


def test_plus_cluster_graph_is_a_star(plus):
    _, cl, cg = plus
    hub = [c for c, k in cl.kind.items() if k == "intersection"]
    assert len(hub) == 1 and len(cg.vertices) == 5
    assert cg.neighbors(hub[0]) == sorted(set(cg.vertices) - {hub[0]})


def test_street_as_edge_contracts_the_middle_street():
    inst = generate_network(h_layout(1))
    cl = build_clusters(inst.graph)
    assert cl.counts_by_kind()["intersection"] == 2
    cg = build_cluster_graph(cl, inst.graph, "street_as_edge")
    via = [e for e in cg.edges.values() if e.get("via") is not None]
    assert len(via) == 1
    assert len(cg.vertices) == cl.n_clusters - 1
    assert cg.is_connected()
    mid = via[0]["via"]
    assert cg.vertex_of[mid] is None
    loc = node_location(cl, cg, int(cl.members(mid)[0]))
    assert loc["kind"] == "street" and len(loc["neighbors"]) == 2


def test_street_as_edge_falls_back_when_no_street_joins_two_crossings(plus):
    inst, cl, _ = plus
    cg = build_cluster_graph(cl, inst.graph, "street_as_edge")
    assert len(cg.vertices) == 5 and all(e.get("via") is None for e in cg.edges.values())
    with pytest.raises(ValueError):
        build_cluster_graph(cl, inst.graph, "bogus")


@pytest.mark.parametrize("seed", range(1, 21))
def test_paper_streets_cluster_graph_is_compact_and_valid(seed):
    inst = generate_network(paper_streets(seed))
    cl = build_clusters(inst.graph)
    assert clustering_is_valid(cl, inst.graph)
    cg = build_cluster_graph(cl, inst.graph)
    assert len(cg.vertices) <= 50
    assert len(cg.dumps().encode()) <= 4096
    assert set(cg.edges) == brute_force_cluster_edges(cl, inst.graph)
    assert cg.is_connected()


def test_clustering_is_deterministic(streets):
    inst, cl, cg = streets
    again = build_clusters(inst.graph)
    assert np.array_equal(again.assignment, cl.assignment) and again.kind == cl.kind
    assert build_cluster_graph(again, inst.graph).dumps() == cg.dumps()


def test_ids_are_ordered_by_smallest_member(streets):
    _, cl, _ = streets
    firsts = [cl.members(c).min() for c in range(cl.n_clusters)]
    assert firsts == sorted(firsts)


def test_small_clusters_are_merged():
    inst = grid_instance(3, 1)
    cl = build_clusters(inst.graph, ClusterParams(min_cluster_size=5))
    assert cl.n_clusters == 1 and cl.kind[0] == "other"
    assert clustering_is_valid(cl, inst.graph)


def test_empty_graph():
    inst = make_instance(np.zeros((0, 2)), 10.0)
    assert build_clusters(inst.graph).n_clusters == 0


def test_sensor_label_clustering():
    inst = grid_instance(10, 4)
    labels = np.where(inst.positions[:, 0] < 5, "water", "field")
    cl = cluster_by_labels(inst.graph, labels)
    assert cl.n_clusters == 2
    assert sorted(cl.labels.values()) == ["field", "water"]
    assert clustering_is_valid(cl, inst.graph)
    # a single odd reading is too small to stand alone
    labels = labels.copy()
    labels[25] = "shade"
    assert cluster_by_labels(inst.graph, labels).n_clusters == 2
    with pytest.raises(ValueError):
        cluster_by_labels(inst.graph, labels[:-1])


def test_validity_checker_catches_split_cluster():
    inst = grid_instance(10, 1)
    from locfree.clustergraph import Clustering
    bad = Clustering(np.array([0] * 3 + [1] * 4 + [0] * 3), {0: "street", 1: "street"})
    assert not clustering_is_valid(bad, inst.graph)


# -- edge attributes and serialization --------------------------------------------

def test_uniform_attributes(plus):
    inst, cl, cg = plus
    attrs = {v: {"energy": 0.7, "bandwidth": 250.0} for v in range(inst.n)}
    out = annotate_edges(cg, cl, inst.graph, attrs)
    assert all(e["residual_energy"] == pytest.approx(0.7) and e["bandwidth"] == 250.0 for e in out.edges.values())


def test_zero_energy_border_node_lowers_its_edge(plus):
    inst, cl, cg = plus
    key = sorted(cg.edges)[0]
    a = cl.assignment
    u = next(int(u) for u, v in inst.graph.edges if {a[u], a[v]} == set(key))
    energy = np.ones(inst.n)
    energy[u] = 0.0
    out = annotate_edges(cg, cl, inst.graph, (energy, np.ones(inst.n)))
    others = [e["residual_energy"] for k, e in out.edges.items() if k != key]
    assert out.edges[key]["residual_energy"] < min(others)


def test_bandwidth_is_the_border_minimum(plus):
    inst, cl, cg = plus
    key = sorted(cg.edges)[-1]
    a = cl.assignment
    u = next(int(u) for u, v in inst.graph.edges if {a[u], a[v]} == set(key))
    bw = np.full(inst.n, 250.0)
    bw[u] = 1.0
    out = annotate_edges(cg, cl, inst.graph, (np.ones(inst.n), bw))
    assert out.edges[key]["bandwidth"] == 1.0
    assert all(e["bandwidth"] == 250.0 for k, e in out.edges.items() if k != key)


def test_node_location(plus, corridor):
    inst, cl, cg = plus
    centre = int(np.argmin(np.linalg.norm(inst.positions, axis=1)))
    loc = node_location(cl, cg, centre)
    assert loc["kind"] == "intersection" and len(loc["neighbors"]) == 4
    ccl = build_clusters(corridor.graph)
    assert node_location(ccl, build_cluster_graph(ccl, corridor.graph), 0)["kind"] == "street"
    with pytest.raises(KeyError):
        node_location(cl, cg, inst.n)


def test_json_and_dot_output(streets):
    _, cl, cg = streets
    data = json.loads(cg.dumps())
    assert data["format"] == "locfree.clustergraph/1"
    assert [v["id"] for v in data["vertices"]] == sorted(cg.vertices)
    assert sum(v["node_count"] for v in data["vertices"]) == len(cl.assignment)
    dot = cg.to_dot()
    assert dot.startswith("graph clusters {") and dot.count(" -- ") == len(cg.edges)

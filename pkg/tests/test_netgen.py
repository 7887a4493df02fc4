import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locfree.netgen import (CommGraph, DeploymentSpec, NetworkInstance, Point2D, Segment,
                            build_unit_disk_graph, corridor_layout, generate_network,
                            measure_distances, paper_streets, spec_from_json, spec_to_json,
                            true_distances)
from locfree.schema import ConfigError, DeploymentModel, validate_file


def brute_udg(pos, r):
    n = len(pos)
    return {(i, j) for i in range(n) for j in range(i + 1, n) if np.hypot(*(pos[i] - pos[j])) <= r}


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 500), seed=st.integers(0, 2**32 - 1), r=st.floats(0.5, 15.0))
def test_unit_disk_matches_pairwise_oracle(n, seed, r):
    pos = np.random.default_rng(seed).uniform(0, 60, (n, 2))
    g = build_unit_disk_graph(pos, r)
    assert {tuple(e) for e in g.edges.tolist()} == brute_udg(pos, r)


def test_disk_is_closed():
    g = build_unit_disk_graph([[0.0, 0.0], [10.0, 0.0], [20.0001, 0.0]], 10.0)
    assert g.edges.tolist() == [[0, 1]]


def test_commgraph_normalizes_and_rejects_loops():
    g = CommGraph(3, [[2, 1], [1, 2], [0, 1]])
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.neighbors(1).tolist() == [0, 2]
    with pytest.raises(ValueError):
        CommGraph(2, [[1, 1]])


def test_same_seed_same_instance():
    a, b = generate_network(paper_streets(4)), generate_network(paper_streets(4))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.anchors, b.anchors)
    assert a.graph == b.graph
    c = generate_network(paper_streets(5))
    assert c.n != a.n or not np.array_equal(a.positions, c.positions)


def test_paper_streets_shape():
    inst = generate_network(paper_streets(1))
    assert abs(inst.n - 2200) <= 0.05 * 2200
    assert len(inst.anchors) == 200
    assert inst.graph.is_connected()
    assert 40 <= inst.graph.degree().mean() <= 60


def test_instance_json_round_trip():
    inst = generate_network(corridor_layout(2, length=40))
    back = NetworkInstance.from_json(json.loads(inst.dumps()))
    assert np.array_equal(back.positions, inst.positions)
    assert back.graph == inst.graph


def test_spec_round_trip():
    spec = paper_streets(3)
    assert spec_from_json(spec_to_json(spec)) == spec


def test_zero_noise_is_exact_and_noise_floor_holds():
    inst = generate_network(corridor_layout(1, length=40))
    e = inst.graph.edges
    true = np.linalg.norm(inst.positions[e[:, 0]] - inst.positions[e[:, 1]], axis=1)
    assert np.array_equal(true_distances(inst).measured, true)
    noisy = measure_distances(inst, 5.0, 9)  # absurd noise to exercise the floor
    assert np.all(noisy.measured >= 0.01 * true - 1e-12)
    assert np.array_equal(noisy.measured, measure_distances(inst, 5.0, 9).measured)


def test_ranging_symmetric_lookup():
    inst = generate_network(corridor_layout(1, length=40))
    r = measure_distances(inst, 0.01, 1)
    u, v = inst.graph.edges[5]
    assert r.get(u, v) == r.get(v, u)
    with pytest.raises(KeyError):
        r.get(0, 0)


def test_invalid_spec_rejected():
    bad = DeploymentSpec((Segment((Point2D(0, 0),), 5.0, 0.1),), (), 10.0)
    with pytest.raises(ValueError):
        generate_network(bad)


def test_schema_error_has_line_number(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text('{\n  "format": "locfree.deployment/1",\n  "comm_radius": -1,\n'
                 '  "segments": [{"polyline": [[0,0],[1,0]], "width": 2, "node_density": 0.1}]\n}\n')
    with pytest.raises(ConfigError) as err:
        validate_file(p, DeploymentModel)
    assert f"{p}:3" in str(err.value)

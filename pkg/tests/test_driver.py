"""Message-passing replays of the local ops agree with the vectorized code and never read past one hop."""
import numpy as np
import pytest

from locfree.clustergraph import _label_components, branch_counts, detect_boundary
from locfree.driver import (LocalityError, RoundDriver, distributed_boundary, distributed_branch_counts,
                            distributed_dv_hop, distributed_label_components, distributed_refinement_round,
                            flood_hops, flood_sum_dist)
from locfree.localization import dv_hop, hop_counts, sum_dist
from locfree.localization.refinement import neighbor_lateration_step
from locfree.netgen import corridor_layout, generate_network, measure_distances


@pytest.fixture(scope="module")
def setup():
    inst = generate_network(corridor_layout(3, length=60))
    rng = np.random.default_rng(0)
    anchors = sorted(rng.choice(inst.n, 6, replace=False).tolist())
    return inst, anchors, measure_distances(inst, 0.05, 1)


def test_hop_flood(setup):
    inst, anchors, _ = setup
    h, drv = flood_hops(inst.graph, anchors)
    assert np.array_equal(h, hop_counts(inst.graph, anchors))
    assert drv.log.foreign(inst.graph) == []


def test_sum_dist_flood(setup):
    inst, anchors, r = setup
    s, drv = flood_sum_dist(inst.graph, r, anchors)
    np.testing.assert_allclose(s, sum_dist(inst.graph, r, anchors).est, rtol=1e-12, equal_nan=True)
    assert drv.log.foreign(inst.graph) == []


def test_dv_hop(setup):
    inst, anchors, _ = setup
    pos = {a: inst.positions[a] for a in anchors}
    d, drv = distributed_dv_hop(inst.graph, anchors, pos)
    np.testing.assert_allclose(d, dv_hop(inst.graph, anchors, pos).est, rtol=1e-12, equal_nan=True)
    assert drv.log.foreign(inst.graph) == []


def test_refinement_round(setup):
    inst, anchors, r = setup
    rng = np.random.default_rng(0)
    coords = inst.positions + rng.normal(0, 2, (inst.n, 2))
    coords[rng.random(inst.n) < 0.2] = np.nan
    movable = np.ones(inst.n, bool)
    movable[anchors] = False
    conf = np.where(movable, 0.1, 1.0)
    ref_xy, ref_conf = neighbor_lateration_step(coords, inst.graph, r, movable, confidence=conf)
    xy, c, drv = distributed_refinement_round(inst.graph, r, coords, conf, movable)
    assert np.array_equal(xy, ref_xy, equal_nan=True)
    assert np.array_equal(c, ref_conf)
    assert drv.log.foreign(inst.graph) == []


def test_boundary(setup):
    inst = setup[0]
    ref = detect_boundary(inst.graph)
    rim, root, drv = distributed_boundary(inst.graph)
    assert np.array_equal(rim, ref.is_boundary)
    assert all(len(set(root[s])) == 1 for s in ref.strips)
    assert len(set(root[rim])) == len(ref.strips)
    assert drv.log.foreign(inst.graph) == []


def test_branch_counts(setup):
    inst = setup[0]
    br, drv = distributed_branch_counts(inst.graph)
    assert np.array_equal(br, branch_counts(inst.graph))
    assert drv.log.foreign(inst.graph) == []


def test_label_components(setup):
    inst = setup[0]
    labels = (inst.positions[:, 0] > 30).astype(np.int64)
    roots, drv = distributed_label_components(inst.graph, labels)
    ref = _label_components(inst.graph, labels)
    # same partition: roots and reference ids induce identical groupings
    pairs = set(zip(roots.tolist(), ref.tolist()))
    assert len(pairs) == len(set(roots)) == len(set(ref))
    assert drv.log.foreign(inst.graph) == []


def test_strict_mode_rejects_far_reads(setup):
    inst = setup[0]
    far = int(np.argmax(hop_counts(inst.graph, [0])[0]))
    drv = RoundDriver(inst.graph)
    with pytest.raises(LocalityError):
        drv.run(lambda view: {"x": view.peek(far, "x")} if view.v == 0 else None, 1)


def test_lenient_mode_logs_far_reads(setup):
    inst = setup[0]
    far = int(np.argmax(hop_counts(inst.graph, [0])[0]))
    drv = RoundDriver(inst.graph, strict=False)
    drv.run(lambda view: {"x": view.peek(far, "x")} if view.v == 0 else None, 1)
    assert drv.log.foreign(inst.graph) == [(0, far)]


def test_range_to_requires_an_edge(setup):
    inst, _, r = setup
    far = int(np.argmax(hop_counts(inst.graph, [0])[0]))
    drv = RoundDriver(inst.graph, ranging=r)
    with pytest.raises(LocalityError):
        drv.run(lambda view: {"d": view.range_to(far)} if view.v == 0 else None, 1)

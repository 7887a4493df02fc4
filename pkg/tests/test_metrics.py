import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance
from locfree.metrics import (align, check_c1, check_c2, check_c2_bruteforce, detect_folds,
                             evaluate, region_aggregate)
from locfree.netgen import generate_network, paper_streets


def fold_instance():
    """Two parallel 60 m streets 60 m apart; the placement drops the upper one onto the lower."""
    rng = np.random.default_rng(7)
    lower = np.column_stack([rng.uniform(0, 60, 120), rng.uniform(-5, 5, 120)])
    upper = np.column_stack([rng.uniform(0, 60, 120), rng.uniform(55, 65, 120)])
    inst = make_instance(np.concatenate([lower, upper]), 10.0)
    placed = inst.positions.copy()
    placed[120:, 1] -= 60.0
    return inst, placed


def test_ground_truth_is_clean():
    inst = generate_network(paper_streets(2))
    rep = evaluate(inst.positions, inst)
    assert not rep.c1_violations and not rep.c2_violations and not rep.fold_pairs
    assert rep.rms_error == 0.0


def test_single_violations():
    inst = make_instance([[0, 0], [5, 0], [30, 0]], 10.0)
    placed = np.array([[0, 0], [20, 0], [0.0, 0.0]])
    assert [(u, v) for u, v, _ in check_c1(placed, inst.graph, 10.0)] == [(0, 1)]
    assert [(u, v) for u, v, _ in check_c2(placed, inst.graph, 10.0)] == [(0, 2)]


def test_c1_skips_unpositioned():
    inst = make_instance([[0, 0], [5, 0]], 10.0)
    out = check_c1(np.array([[0, 0], [np.nan, np.nan]]), inst.graph, 10.0)
    assert len(out) == 0 and out.skipped == 1


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 300), seed=st.integers(0, 2**32 - 1), d=st.floats(0.5, 20))
def test_grid_c2_equals_bruteforce(n, seed, d):
    rng = np.random.default_rng(seed)
    inst = make_instance(rng.uniform(0, 80, (n, 2)), 8.0)
    placed = rng.uniform(0, 80, (n, 2))
    placed[rng.random(n) < 0.1] = np.nan
    fast = [(u, v) for u, v, _ in check_c2(placed, inst.graph, d)]
    slow = [(u, v) for u, v, _ in check_c2_bruteforce(placed, inst.graph, d)]
    assert fast == sorted(slow)


def test_constructed_fold_reports_every_cross_pair():
    inst, placed = fold_instance()
    folds = detect_folds(placed, inst)
    expected = set()
    for u in range(120):
        for v in range(120, 240):
            true = np.linalg.norm(inst.positions[u] - inst.positions[v])
            near = np.linalg.norm(placed[u] - placed[v])
            if true > 50 and near < 10:
                expected.add((u, v))
    assert expected
    assert {(u, v) for u, v, *_ in folds} == expected
    assert all(u < v for u, v, *_ in folds)


def test_fold_thresholds_validated():
    inst, placed = fold_instance()
    with pytest.raises(ValueError):
        detect_folds(placed, inst, far_factor=1.0, near_factor=1.0)


def rotation(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), angle=st.floats(-np.pi, np.pi), refl=st.booleans())
def test_align_recovers_rigid_motions(seed, angle, refl):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(-50, 50, (40, 2))
    moved = truth @ rotation(angle).T + rng.uniform(-100, 100, 2)
    if refl:
        moved[:, 0] *= -1
    _, tf, rms = align(moved, truth, allow_reflection=True)
    assert rms < 1e-9
    assert tf.reflection == refl


def test_reflection_needs_permission():
    truth = np.random.default_rng(1).uniform(0, 10, (30, 2))
    mirrored = truth * [-1, 1]
    assert align(mirrored, truth, allow_reflection=True)[2] < 1e-9
    assert align(mirrored, truth, allow_reflection=False)[2] > 0.1


def angle_grid_rms(x, y, reflect):
    """Oracle: scan rotations on a fine grid, translation by centroids."""
    if reflect:
        x = x * [1, -1]
    xc, yc = x - x.mean(axis=0), y - y.mean(axis=0)
    best = np.inf
    for a in np.linspace(-np.pi, np.pi, 72001):
        r = ((xc @ rotation(a).T - yc) ** 2).sum(axis=1).mean()
        best = min(best, r)
    return np.sqrt(best)


def test_align_matches_angle_grid_oracle():
    rng = np.random.default_rng(3)
    x, y = rng.uniform(0, 20, (25, 2)), rng.uniform(0, 20, (25, 2))
    _, _, rms = align(x, y, allow_reflection=True)
    oracle = min(angle_grid_rms(x, y, False), angle_grid_rms(x, y, True))
    assert rms == pytest.approx(oracle, abs=1e-6)


def test_align_with_scale_and_degenerate_flag():
    truth = np.random.default_rng(2).uniform(0, 10, (20, 2))
    _, tf, rms = align(truth * 3.0, truth, allow_scale=True)
    assert rms < 1e-9 and tf.scale == pytest.approx(1 / 3)
    line = np.column_stack([np.arange(10.0), np.zeros(10)])
    assert align(line, line)[1].low_confidence
    with pytest.raises(ValueError):
        align(truth[:2], truth[:2])


def test_region_aggregate_ground_truth_agrees():
    inst, _ = fold_instance()
    vals = np.where(np.arange(inst.n) < 120, 30.0, 0.0)
    out = region_aggregate(inst.positions, inst, (0, -10, 60, 10), vals, 25.0)
    assert out["mean_by_placement"] == out["mean_by_truth"] == 30.0


def test_region_aggregate_alarm_miss_under_folding():
    inst, placed = fold_instance()
    # hot lower street, cold upper street folded onto it
    vals = np.where(np.arange(inst.n) < 120, 30.0, 0.0)
    out = region_aggregate(placed, inst, (0, -10, 60, 10), vals, 25.0)
    assert out["mean_by_placement"] < out["mean_by_truth"]
    assert out["alarm_by_truth"] and not out["alarm_by_placement"]


def test_region_aggregate_empty_region():
    inst, placed = fold_instance()
    out = region_aggregate(placed, inst, (500, 500, 510, 510), np.zeros(inst.n), 1.0)
    assert out["placement_empty"] and out["mean_by_placement"] is None


def test_report_exports():
    inst, placed = fold_instance()
    rep = evaluate(placed, inst)
    csv_text = rep.to_csv("run", inst)
    assert csv_text.splitlines()[0] == "run_id,kind,node_a,node_b,placed_dist,true_dist"
    assert len(csv_text.splitlines()) == 1 + len(rep.c1_violations) + len(rep.c2_violations) + len(rep.fold_pairs)
    assert '"fold_pairs"' in rep.to_json()


def test_virtual_frame_alignment():
    from locfree.localization.types import Placement
    inst = generate_network(paper_streets(2))
    mirrored = (inst.positions * [-1, 1]) @ rotation(0.7).T + [300, -40]
    rep = evaluate(Placement(mirrored, "virtual"), inst)
    assert rep.rms_error < 1e-6 and not rep.fold_pairs and not rep.c1_violations
    # a stretched frame keeps its metric scale for the consistency checks
    rep = evaluate(Placement(mirrored * 2.0, "virtual"), inst)
    assert rep.rms_error < 1e-6 and rep.c1_violations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringseg import (
    ClusterLabeling,
    PointCloud,
    Proposal,
    RefineParams,
    SizePrior,
    adaptive_threshold,
    enlarge_and_merge,
    enlarge_bbox,
    filter_proposals,
    min_oriented_bbox,
)
from ringseg.refine import plane_basis

from oracles import points_in_oriented_box, sweep_min_rect_area

UP = np.array([0.0, 0.0, 1.0])


def test_unit_square_axis_aligned():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    box = min_oriented_bbox(pts, UP)
    assert abs(box.area - 1.0) < 1e-9
    assert min(box.yaw % (np.pi / 2), np.pi / 2 - box.yaw % (np.pi / 2)) < 1e-9


def test_unit_square_rotated_45():
    base = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    rot = base @ np.array([[c, s, 0], [-s, c, 0], [0, 0, 1.0]])
    box = min_oriented_bbox(rot, UP)
    assert abs(box.area - 1.0) < 1e-9
    assert abs(box.yaw % (np.pi / 2) - np.pi / 4) < 1e-9


def test_single_point_epsilon_box():
    box = min_oriented_bbox(np.array([[3.0, 4.0, 5.0]]), UP)
    np.testing.assert_allclose(box.half_extents, 0.01)
    np.testing.assert_allclose(box.center, [3, 4, 5])


def test_collinear_points_get_valid_box():
    pts = np.outer(np.linspace(0, 2, 9), [1.0, 1.0, 0.0])
    box = min_oriented_bbox(pts, UP)
    assert (box.half_extents > 0).all()
    assert abs(2 * box.half_extents[0] - np.sqrt(8)) < 1e-6


def test_calipers_vs_angle_sweep(rng):
    e1, e2 = plane_basis(UP)
    for _ in range(40):
        n = int(rng.integers(4, 60))
        pts = np.column_stack([rng.normal(0, 3, n), rng.normal(0, 1.5, n),
                               rng.uniform(0, 2, n)])
        box = min_oriented_bbox(pts, UP)
        uv = np.column_stack([pts @ e1, pts @ e2])
        oracle = sweep_min_rect_area(uv)
        assert box.area <= oracle * 1.005 + 1e-12


def test_bbox_area_le_axis_aligned(rng):
    for _ in range(30):
        pts = rng.normal(0, 2, (int(rng.integers(3, 40)), 3))
        box = min_oriented_bbox(pts, UP)
        aabb = ((pts[:, 0].max() - pts[:, 0].min())
                * (pts[:, 1].max() - pts[:, 1].min()))
        assert box.area <= aabb + 1e-9


def test_bbox_rotation_equivariance(rng):
    pts = rng.normal(0, 2, (30, 3))
    base = min_oriented_bbox(pts, UP)
    ang = 0.7
    c, s = np.cos(ang), np.sin(ang)
    rot = pts @ np.array([[c, s, 0], [-s, c, 0], [0, 0, 1.0]])
    turned = min_oriented_bbox(rot, UP)
    assert abs(turned.area - base.area) < 1e-9
    dyaw = (turned.yaw - base.yaw - ang) % (np.pi / 2)
    assert min(dyaw, np.pi / 2 - dyaw) < 1e-7


def test_bbox_contains_members(rng):
    for _ in range(20):
        pts = rng.normal(0, 2, (25, 3))
        box = min_oriented_bbox(pts, UP)
        local = np.abs(box.to_local(pts))
        assert (local <= box.half_extents + 1e-9).all()


def test_bbox_tilted_normal_alignment(rng):
    n = np.array([0.1, -0.05, 1.0])
    n /= np.linalg.norm(n)
    pts = rng.normal(0, 2, (40, 3))
    box = min_oriented_bbox(pts, n)
    np.testing.assert_allclose(box.axes()[:, 2], n, atol=1e-12)
    np.testing.assert_allclose(box.axes().T @ box.axes(), np.eye(3), atol=1e-12)


def test_adaptive_threshold_values():
    params = RefineParams(th_num_base=30, d_ref=10.0, th_num_floor=5)
    assert adaptive_threshold(10.0, params) == 30
    assert adaptive_threshold(20.0, params) == 15
    assert adaptive_threshold(1000.0, params) == 5
    with pytest.raises(ValueError):
        adaptive_threshold(0.0, params)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 500), st.floats(0.1, 500))
def test_adaptive_threshold_monotone(d1, d2):
    params = RefineParams()
    lo, hi = sorted([d1, d2])
    assert adaptive_threshold(lo, params) >= adaptive_threshold(hi, params)


def _labeling_with_clusters(clusters: dict[int, np.ndarray], n: int) -> ClusterLabeling:
    labels = np.zeros(n, dtype=np.int64)
    for cid, members in clusters.items():
        labels[members] = cid
    return ClusterLabeling(labels=labels, clusters=clusters)


def test_filter_rejects_small_cluster():
    xyz = np.tile([[10.0, 0.0, 0.0]], (5, 1)) + np.random.default_rng(0).normal(0, 0.2, (5, 3))
    labeling = _labeling_with_clusters({1: np.arange(5)}, 5)
    bboxes = {1: min_oriented_bbox(xyz, UP)}
    kept, out = filter_proposals(labeling, xyz, bboxes, RefineParams())
    assert kept == []
    assert (out.labels == 0).all()


def test_filter_rejects_oversized_box():
    rng = np.random.default_rng(1)
    xyz = np.column_stack([rng.uniform(0, 10, 200), rng.uniform(0, 4, 200),
                           rng.uniform(0, 3, 200)]) + [5, 0, 0]
    labeling = _labeling_with_clusters({1: np.arange(200)}, 200)
    bboxes = {1: min_oriented_bbox(xyz, UP)}
    kept, _ = filter_proposals(labeling, xyz, bboxes, RefineParams())
    assert kept == []


def test_filter_accepts_car_sized_cluster(rng):
    xyz = np.column_stack([rng.uniform(0, 4.2, 300), rng.uniform(0, 1.8, 300),
                           rng.uniform(0, 1.5, 300)]) + [8, 0, -1]
    labeling = _labeling_with_clusters({1: np.arange(300)}, 300)
    bboxes = {1: min_oriented_bbox(xyz, UP)}
    kept, out = filter_proposals(labeling, xyz, bboxes, RefineParams())
    assert kept == [1]
    assert (out.labels == labeling.labels).all()


def test_filter_matches_predicate_oracle(rng):
    params = RefineParams()
    for _ in range(40):
        n_clusters = int(rng.integers(1, 6))
        clusters = {}
        xyz_parts = []
        start = 0
        for cid in range(1, n_clusters + 1):
            count = int(rng.integers(1, 80))
            center = rng.uniform(-30, 30, 3)
            scale = rng.uniform(0.1, 3.0, 3)
            pts = center + rng.uniform(0, 1, (count, 3)) * scale
            clusters[cid] = np.arange(start, start + count)
            xyz_parts.append(pts)
            start += count
        xyz = np.vstack(xyz_parts)
        labeling = _labeling_with_clusters(clusters, start)
        bboxes = {cid: min_oriented_bbox(xyz[m], UP) for cid, m in clusters.items()}
        kept, _ = filter_proposals(labeling, xyz, bboxes, params)
        expect = []
        for cid, m in clusters.items():
            d = float(np.linalg.norm(xyz[m].mean(axis=0)))
            ext = 2 * bboxes[cid].half_extents
            count_ok = m.size >= adaptive_threshold(d, params)
            size_ok = any(p.admits(ext) for p in params.size_priors.values())
            if count_ok and size_ok:
                expect.append(cid)
        assert kept == expect


def test_filter_order_independent(rng):
    xyz = rng.normal(0, 5, (120, 3)) + [15, 0, 0]
    clusters = {3: np.arange(0, 40), 1: np.arange(40, 80), 2: np.arange(80, 120)}
    labeling = _labeling_with_clusters(clusters, 120)
    bboxes = {cid: min_oriented_bbox(xyz[m], UP) for cid, m in clusters.items()}
    kept1, _ = filter_proposals(labeling, xyz, bboxes, RefineParams())
    relabeled = {cid: clusters[cid] for cid in (2, 3, 1)}
    kept2, _ = filter_proposals(
        ClusterLabeling(labels=labeling.labels, clusters=relabeled),
        xyz, bboxes, RefineParams())
    assert kept1 == kept2


def test_enlarge_margins_applied():
    params = RefineParams()
    pts = np.array([[0.0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 1, 1]])
    box = min_oriented_bbox(pts, UP)
    grown = enlarge_bbox(box, params)
    np.testing.assert_allclose(grown.half_extents - box.half_extents,
                               [0.1, 0.1, 0.4])
    np.testing.assert_allclose(grown.center, box.center - 0.4 * box.normal)
    # top face fixed, growth goes to the ground side
    top_before = box.center @ box.normal + box.half_extents[2]
    top_after = grown.center @ grown.normal + grown.half_extents[2]
    assert abs(top_before - top_after) < 1e-12


def test_enlarge_and_merge_recovers_feet(rng):
    # pedestrian-like column whose lowest band was masked as ground
    n = 200
    pts = np.column_stack([rng.uniform(-0.3, 0.3, n) + 5.0,
                           rng.uniform(-0.3, 0.3, n),
                           rng.uniform(-1.7, 0.0, n)])
    cloud = PointCloud(xyz=pts, intensity=np.zeros(n))
    ground = pts[:, 2] < -1.5
    members = np.flatnonzero(~ground)
    bbox = min_oriented_bbox(pts[members], UP)
    prop = Proposal(cluster_id=1, member_indices=members, bbox=bbox,
                    distance=5.0)
    out = enlarge_and_merge(prop, cloud, ground, RefineParams())
    grown = out.bbox
    oracle = points_in_oriented_box(pts[ground], grown.center, grown.axes(),
                                    grown.half_extents)
    expect = set(np.flatnonzero(ground)[oracle].tolist()) | set(members.tolist())
    assert set(out.member_indices.tolist()) == expect
    assert oracle.all()  # every masked foot point is within the 0.4 m z margin


def test_enlarge_and_merge_no_candidates(rng):
    pts = rng.normal(0, 1, (50, 3)) + [10, 0, 0]
    cloud = PointCloud(xyz=pts, intensity=np.zeros(50))
    ground = np.zeros(50, dtype=bool)
    bbox = min_oriented_bbox(pts, UP)
    prop = Proposal(1, np.arange(50), bbox, 10.0)
    out = enlarge_and_merge(prop, cloud, ground, RefineParams())
    np.testing.assert_array_equal(out.member_indices, prop.member_indices)
    assert out.bbox.half_extents[2] == bbox.half_extents[2] + 0.4


def test_enlarge_exclude_prevents_double_claims(rng):
    pts = np.vstack([rng.normal(0, 0.5, (30, 3)) + [5, 0, 0],
                     rng.normal(0, 0.5, (30, 3)) + [5.5, 0, 0]])
    cloud = PointCloud(xyz=np.clip(pts, -50, 50), intensity=np.zeros(60))
    ground = np.ones(60, dtype=bool)
    ground[:5] = False
    bbox = min_oriented_bbox(cloud.xyz[:30], UP)
    prop = Proposal(1, np.arange(5), bbox, 5.0)
    first = enlarge_and_merge(prop, cloud, ground, RefineParams())
    claimed = np.zeros(60, dtype=bool)
    claimed[first.member_indices] = True
    second = enlarge_and_merge(prop, cloud, ground, RefineParams(), exclude=claimed)
    overlap = set(first.member_indices.tolist()) & set(
        second.member_indices.tolist()) - set(range(5))
    assert not overlap


def test_size_prior_validation():
    with pytest.raises(ValueError):
        SizePrior((1.0, 1.0, 1.0), (0.5, 2.0, 2.0))
    prior = SizePrior((1.5, 1.2, 1.0), (6.0, 2.5, 2.5))
    assert prior.admits(np.array([1.8, 4.2, 1.5]))  # orientation-free
    assert not prior.admits(np.array([10.0, 4.0, 3.0]))


def test_refine_params_validation():
    with pytest.raises(ValueError):
        RefineParams(th_num_base=3, th_num_floor=5)
    with pytest.raises(ValueError):
        RefineParams(d_ref=0.0)
    with pytest.raises(ValueError):
        RefineParams(enlarge_xy=-0.1)

"""Frame-level orchestration of the cluster-proposal stage.

Order per frame: ring assignment (needs the full scan order), segmented
ground fitting, ring clustering of the non-ground remainder, then box
fitting, filtering and enlargement. Everything is a pure function of the
frame and the configuration, so frames can be processed in parallel with
identical results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, assign_rings
from .clustering import ClusterParams, cluster_ring_based
from .ground import GroundParams, PlaneModel, ground_plane_fit, split_segments
from .refine import (
    OrientedBBox,
    Proposal,
    RefineParams,
    enlarge_bbox,
    filter_proposals,
    merge_candidates,
    min_oriented_bbox,
)

UP = np.array([0.0, 0.0, 1.0])


@dataclass
class Stage1Result:
    proposals: list[Proposal]
    cluster_labels: np.ndarray  # uint32 over the full cloud, 0 = background
    ground_mask: np.ndarray
    planes: list[PlaneModel | None]
    points_in: int
    points_passed: int


def _segment_of(x: float, lo: float, width: float, n_seg: int) -> int:
    if width <= 0.0:
        return 0
    idx = int(np.ceil((x - lo) / width)) - 1
    return min(max(idx, 0), n_seg - 1)


def _normal_for_segment(planes: list[PlaneModel | None], seg: int) -> np.ndarray:
    """Ground normal of the segment, nearest fitted neighbour as fallback."""
    if planes[seg] is not None:
        return planes[seg].normal
    best = None
    for offset in range(1, len(planes)):
        for cand in (seg - offset, seg + offset):
            if 0 <= cand < len(planes) and planes[cand] is not None:
                best = planes[cand].normal
                break
        if best is not None:
            break
    return best if best is not None else UP


def run_stage1(
    cloud: PointCloud,
    ground_params: GroundParams,
    cluster_params: ClusterParams,
    refine_params: RefineParams,
    num_rings: int,
    timings: dict | None = None,
) -> Stage1Result:
    """Full per-frame proposal pipeline.

    When `timings` is given, per-stage wall-clock seconds are stored under
    "ground", "cluster" (including ring assignment), "refine" and "total".
    """
    n = len(cloud)
    t0 = time.perf_counter()
    ringed = assign_rings(cloud, num_rings)
    t_rings = time.perf_counter()

    segment_idx = split_segments(cloud, ground_params.n_seg)
    ground_mask, planes = ground_plane_fit(cloud, segment_idx, ground_params)
    t_ground = time.perf_counter()

    nonground = np.flatnonzero(~ground_mask)
    sub = ringed.select(nonground)
    labeling = cluster_ring_based(sub, cluster_params)
    t_cluster = time.perf_counter()

    x = cloud.xyz[:, 0]
    lo = float(x.min()) if n else 0.0
    width = ((float(x.max()) - lo) / ground_params.n_seg) if n else 0.0

    bboxes: dict[int, OrientedBBox] = {}
    for cid, members in labeling.clusters.items():
        pts = sub.xyz[members]
        seg = _segment_of(float(pts[:, 0].mean()), lo, width, ground_params.n_seg)
        bboxes[cid] = min_oriented_bbox(pts, _normal_for_segment(planes, seg))
    kept, labeling = filter_proposals(labeling, sub.xyz, bboxes, refine_params)

    cluster_labels = np.zeros(n, dtype=np.uint32)
    proposals: list[Proposal] = []
    # merge works on compact ground-point arrays: the ground is most of the
    # frame and per-proposal full-cloud masks would dominate the stage
    ground_idx = np.flatnonzero(ground_mask)
    ground_xyz = cloud.xyz[ground_idx]
    ground_free = np.ones(ground_idx.size, dtype=bool)
    points_passed = 0
    for cid in kept:
        members_full = nonground[labeling.clusters[cid]]
        centroid = cloud.xyz[members_full].mean(axis=0)
        ebox = enlarge_bbox(bboxes[cid], refine_params)
        merged_local = merge_candidates(ebox, ground_xyz, ground_free)
        ground_free[merged_local] = False
        members = np.concatenate([members_full, ground_idx[merged_local]])
        prop = Proposal(
            cluster_id=cid,
            member_indices=members,
            bbox=ebox,
            distance=float(np.linalg.norm(centroid)),
        )
        cluster_labels[prop.member_indices] = cid
        points_passed += members.size
        proposals.append(prop)
    t_refine = time.perf_counter()

    if timings is not None:
        timings["ground"] = t_ground - t_rings
        timings["cluster"] = (t_rings - t0) + (t_cluster - t_ground)
        timings["refine"] = t_refine - t_cluster
        timings["total"] = t_refine - t0
    return Stage1Result(
        proposals=proposals,
        cluster_labels=cluster_labels,
        ground_mask=ground_mask,
        planes=planes,
        points_in=n,
        points_passed=points_passed,
    )

"""Ring-based clustering of the non-ground cloud.

Consecutive points within a ring form runs (closer than th_ring, with the
ring closed across the azimuth wraparound); each point also links to its
nearest neighbour on the previous ring when closer than th_prop. Labels
propagate in one pass over the rings; conflicting labels merge to the
smallest id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .cloud import PointCloud


@dataclass(frozen=True)
class ClusterParams:
    th_ring: float = 0.5
    th_prop: float = 1.0

    def __post_init__(self):
        if self.th_ring <= 0:
            raise ValueError("th_ring must be > 0")
        if self.th_prop <= 0:
            raise ValueError("th_prop must be > 0")


@dataclass(frozen=True)
class ClusterLabeling:
    """Canonical per-point cluster ids (>= 1) plus membership lists.

    labels[i] is the minimal id of point i's merge class; clusters maps
    each id to the indices of its members (a partition of the input).
    """

    labels: np.ndarray
    clusters: dict[int, np.ndarray]


def resolve_labels(raw_labels: np.ndarray, merges: Iterable[tuple[int, int]]) -> ClusterLabeling:
    """Collapse merge records so every point carries its class's minimum id.

    Union-find with union-by-minimum: parents only ever decrease, so each
    root is the smallest id of its class. Idempotent by construction.
    """
    raw = np.asarray(raw_labels, dtype=np.int64)
    if raw.size and raw.min() < 1:
        raise ValueError("raw labels must be >= 1")
    max_label = int(raw.max()) if raw.size else 0
    parent = np.arange(max_label + 1, dtype=np.int64)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in merges:
        ra, rb = find(int(a)), find(int(b))
        if ra == rb:
            continue
        if ra < rb:
            parent[rb] = ra
        else:
            parent[ra] = rb

    lut = np.empty(max_label + 1, dtype=np.int64)
    for lab in range(max_label + 1):
        lut[lab] = find(lab)
    labels = lut[raw]

    clusters: dict[int, np.ndarray] = {}
    if labels.size:
        order = np.argsort(labels, kind="stable")
        sorted_labels = labels[order]
        cut = np.flatnonzero(np.diff(sorted_labels)) + 1
        for chunk in np.split(order, cut):
            clusters[int(labels[chunk[0]])] = np.sort(chunk)
    return ClusterLabeling(labels=labels, clusters=clusters)


def _ring_offsets(ring_ids: np.ndarray) -> np.ndarray:
    """Start offset of each ring id in a non-decreasing ring array."""
    num_rings = int(ring_ids.max()) + 1 if ring_ids.size else 0
    return np.searchsorted(ring_ids, np.arange(num_rings + 1)).astype(np.int64)


def _azimuth_windows(xyz: np.ndarray, th_prop: float) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth in [0, 2pi) and the half-window guaranteeing no missed link.

    A previous-ring point within th_prop (3D) of a point at planar range r
    lies within asin(th_prop / r) of its azimuth; beyond quarter-turn
    separation the planar gap alone already exceeds r > th_prop. A small
    additive margin absorbs rounding of the asin.
    """
    az = np.arctan2(xyz[:, 1], xyz[:, 0])
    az = np.where(az < 0, az + kernels.TWO_PI, az)
    r = np.hypot(xyz[:, 0], xyz[:, 1])
    halfwin = np.full(r.shape, np.pi)
    far = r > th_prop
    halfwin[far] = np.arcsin(th_prop / r[far]) + 1e-7
    return az, halfwin


def cluster_ring_based(cloud: PointCloud, params: ClusterParams) -> ClusterLabeling:
    """Cluster a non-ground cloud whose ring ids are assigned.

    Precondition: points keep scan (azimuth) order within each ring. Ids
    are dense-first-encounter starting at 1; 0 is reserved for background.
    """
    if cloud.ring_ids is None:
        raise ValueError("cluster_ring_based requires assigned ring_ids")
    if len(cloud) == 0:
        return ClusterLabeling(labels=np.empty(0, dtype=np.int64), clusters={})
    xyz = cloud.xyz
    az, halfwin = _azimuth_windows(xyz, params.th_prop)
    starts = _ring_offsets(cloud.ring_ids)
    raw, merges, n_merges, _ = kernels.cluster_scan(
        np.ascontiguousarray(xyz[:, 0]),
        np.ascontiguousarray(xyz[:, 1]),
        np.ascontiguousarray(xyz[:, 2]),
        az,
        halfwin,
        starts,
        params.th_ring,
        params.th_prop,
    )
    return resolve_labels(raw, merges[:n_merges])

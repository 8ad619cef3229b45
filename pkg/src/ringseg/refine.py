"""Oriented bounding boxes, prior-based filtering, and box enlargement.

Boxes are ground-aligned: the box z-axis is the fitted ground normal of
the cluster's segment, and yaw rotates about it. Filtering combines a
distance-adaptive point-count threshold with per-class size priors;
surviving proposals are enlarged downward to re-absorb near-ground points
(wheels, feet) that the ground fit swallowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .cloud import ClassId, PointCloud
from .clustering import ClusterLabeling

# degenerate clusters (single point, collinear, flat) get this half extent
EPS_HALF_EXTENT = 0.01


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross carries ~10x call overhead for single 3-vectors
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-handed in-plane basis (e1, e2) for a unit normal.

    e1 is the world x axis projected into the plane (world y when the
    normal is nearly x); e2 = normal x e1.
    """
    n = np.asarray(normal, dtype=np.float64)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ n) * n
    e1 /= np.linalg.norm(e1)
    return e1, _cross3(n, e1)


@dataclass(frozen=True)
class OrientedBBox:
    """Box with z-axis along `normal`, rotated by `yaw` about it.

    half_extents are (x, y) in the box frame and z along the normal; yaw
    is normalized to [0, pi) because the rectangle is symmetric under a
    half turn.
    """

    center: np.ndarray
    yaw: float
    half_extents: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half_extents, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        for a in (c, h, n):
            a.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "yaw", float(self.yaw) % math.pi)

    @cached_property
    def _axes(self) -> np.ndarray:
        e1, e2 = plane_basis(self.normal)
        bx = math.cos(self.yaw) * e1 + math.sin(self.yaw) * e2
        by = _cross3(self.normal, bx)
        return np.column_stack([bx, by, self.normal])

    def axes(self) -> np.ndarray:
        """3x3 matrix whose columns are the box x, y, z axes."""
        return self._axes

    def to_local(self, xyz: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(xyz) - self.center) @ self.axes()

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        local = np.abs(self.to_local(xyz))
        return np.all(local <= self.half_extents, axis=1)

    def corners(self) -> np.ndarray:
        """(8, 3) corners; the first four are the bottom face, CCW."""
        ax = self.axes()
        hx, hy, hz = self.half_extents
        signs = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
        out = []
        for sz in (-1, 1):
            for sx, sy in signs:
                out.append(self.center + ax @ (np.array([sx * hx, sy * hy, sz * hz])))
        return np.array(out)

    @property
    def area(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1]


@dataclass(frozen=True)
class SizePrior:
    """Admissible box extents for one class, full lengths in meters.

    The x range is the long horizontal axis; a candidate's sorted
    (descending) horizontal extents are matched against (x, y) so box
    orientation is irrelevant.
    """

    mins: tuple[float, float, float]
    maxes: tuple[float, float, float]

    def __post_init__(self):
        if not all(lo < hi for lo, hi in zip(self.mins, self.maxes)):
            raise ValueError("size prior mins must be < maxes")

    def admits(self, extents: np.ndarray) -> bool:
        long_e, short_e = sorted(extents[:2], reverse=True)
        return (
            self.mins[0] <= long_e <= self.maxes[0]
            and self.mins[1] <= short_e <= self.maxes[1]
            and self.mins[2] <= extents[2] <= self.maxes[2]
        )


DEFAULT_SIZE_PRIORS: dict[int, SizePrior] = {
    int(ClassId.CAR): SizePrior((1.5, 1.2, 1.0), (6.0, 2.5, 2.5)),
    int(ClassId.PEDESTRIAN): SizePrior((0.2, 0.2, 0.8), (1.2, 1.2, 2.2)),
    int(ClassId.CYCLIST): SizePrior((0.8, 0.2, 0.8), (2.5, 1.2, 2.2)),
}


@dataclass(frozen=True)
class RefineParams:
    th_num_base: int = 30
    d_ref: float = 10.0
    th_num_floor: int = 5
    enlarge_xy: float = 0.1
    enlarge_z: float = 0.4
    size_priors: dict[int, SizePrior] | None = None

    def __post_init__(self):
        if self.th_num_floor < 1 or self.th_num_base < self.th_num_floor:
            raise ValueError("need th_num_base >= th_num_floor >= 1")
        if self.d_ref <= 0:
            raise ValueError("d_ref must be > 0")
        if self.enlarge_xy < 0 or self.enlarge_z < 0:
            raise ValueError("enlargements must be >= 0")
        if self.size_priors is None:
            object.__setattr__(self, "size_priors", dict(DEFAULT_SIZE_PRIORS))


@dataclass(frozen=True)
class Proposal:
    """A surviving cluster: members index into the full cloud."""

    cluster_id: int
    member_indices: np.ndarray
    bbox: OrientedBBox
    distance: float

    def __post_init__(self):
        m = np.asarray(self.member_indices, dtype=np.int64)
        m.setflags(write=False)
        object.__setattr__(self, "member_indices", m)


def _pca_direction(uv: np.ndarray) -> float:
    """Dominant direction angle of 2D points (fallback for degenerate hulls)."""
    centered = uv - uv.mean(axis=0)
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    d = eigvecs[:, -1]
    return math.atan2(d[1], d[0])


def _rect_at_angle(uv: np.ndarray, theta: float):
    c, s = math.cos(theta), math.sin(theta)
    xs = uv[:, 0] * c + uv[:, 1] * s
    ys = -uv[:, 0] * s + uv[:, 1] * c
    return xs.min(), xs.max(), ys.min(), ys.max()


def _best_edge_angle(hv: np.ndarray) -> float:
    """Hull-edge angle whose aligned rectangle has minimal area."""
    edges = np.diff(np.vstack([hv, hv[:1]]), axis=0)
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    xs = np.outer(c, hv[:, 0]) + np.outer(s, hv[:, 1])
    ys = np.outer(c, hv[:, 1]) - np.outer(s, hv[:, 0])
    areas = (xs.max(axis=1) - xs.min(axis=1)) * (ys.max(axis=1) - ys.min(axis=1))
    return float(angles[np.argmin(areas)])


def min_oriented_bbox(points: np.ndarray, normal: np.ndarray) -> OrientedBBox:
    """Minimal-area ground-aligned box around a cluster.

    Points are projected along the ground normal; the minimal rectangle of
    the projection is found by rotating calipers (the optimum is attained
    with one side collinear to a hull edge). Half extents are floored at
    EPS_HALF_EXTENT so degenerate clusters still yield a valid box.
    """
    points = np.atleast_2d(points)
    if points.shape[0] < 1:
        raise ValueError("min_oriented_bbox needs at least one point")
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    e1, e2 = plane_basis(n)
    uv = np.column_stack([points @ e1, points @ e2])
    w = points @ n

    theta = 0.0
    if points.shape[0] >= 3:
        try:
            hull = ConvexHull(uv)
            theta = _best_edge_angle(uv[hull.vertices])
        except QhullError:
            theta = _pca_direction(uv)
    elif points.shape[0] == 2:
        theta = _pca_direction(uv)

    x0, x1, y0, y1 = _rect_at_angle(uv, theta)
    w0, w1 = w.min(), w.max()
    half = np.maximum(
        [(x1 - x0) / 2.0, (y1 - y0) / 2.0, (w1 - w0) / 2.0], EPS_HALF_EXTENT
    )
    # rectangle center back to world coordinates
    c, s = math.cos(theta), math.sin(theta)
    cx, cy, cw = (x0 + x1) / 2.0, (y0 + y1) / 2.0, (w0 + w1) / 2.0
    u_c = cx * c - cy * s
    v_c = cx * s + cy * c
    center = u_c * e1 + v_c * e2 + cw * n
    return OrientedBBox(center=center, yaw=theta, half_extents=half, normal=n)


def adaptive_threshold(d: float, params: RefineParams) -> int:
    """Minimum member count for a cluster at centroid distance d.

    Inversely proportional to distance (sparser returns farther out),
    anchored at th_num_base for d_ref and clamped below by th_num_floor.
    Rounding is half-up for platform determinism.
    """
    if d <= 0:
        raise ValueError("distance must be > 0")
    return max(int(math.floor(params.th_num_base * params.d_ref / d + 0.5)),
               params.th_num_floor)


def filter_proposals(
    labeling: ClusterLabeling,
    xyz: np.ndarray,
    bboxes: dict[int, OrientedBBox],
    params: RefineParams,
) -> tuple[list[int], ClusterLabeling]:
    """Keep clusters that pass both the count and the size-prior test.

    A cluster survives iff its member count reaches the adaptive threshold
    at its centroid distance and its box extents fit inside at least one
    class prior. Rejected clusters are relabeled 0 (background). The kept
    set is a pure function of per-cluster statistics.
    """
    kept: list[int] = []
    labels = labeling.labels.copy()
    for cid in sorted(labeling.clusters):
        members = labeling.clusters[cid]
        centroid = xyz[members].mean(axis=0)
        d = float(np.linalg.norm(centroid))
        bbox = bboxes[cid]
        extents = 2.0 * bbox.half_extents
        ok = members.size >= adaptive_threshold(d, params) and any(
            prior.admits(extents) for prior in params.size_priors.values()
        )
        if ok:
            kept.append(cid)
        else:
            labels[members] = 0
    clusters = {cid: labeling.clusters[cid] for cid in kept}
    return kept, ClusterLabeling(labels=labels, clusters=clusters)


def enlarge_bbox(bbox: OrientedBBox, params: RefineParams) -> OrientedBBox:
    """Grow half extents by enlarge_xy in-plane and enlarge_z along the normal.

    The z growth is applied downward only (center shifts toward the ground,
    top face stays): the points to recover sit below the cluster, and
    symmetric growth would admit overhead structure.
    """
    half = bbox.half_extents + np.array([params.enlarge_xy, params.enlarge_xy,
                                         params.enlarge_z])
    center = bbox.center - params.enlarge_z * bbox.normal
    return replace(bbox, center=center, half_extents=half)


def merge_candidates(bbox: OrientedBBox, xyz: np.ndarray,
                     eligible: np.ndarray) -> np.ndarray:
    """Indices of eligible points inside the box.

    A coarse axis-aligned cut (the box circumradius bounds every inside
    point per axis) runs before the exact rotated containment test.
    """
    radius = float(np.linalg.norm(bbox.half_extents))
    near = eligible.copy()
    for axis in range(3):
        near &= np.abs(xyz[:, axis] - bbox.center[axis]) <= radius
    candidates = np.flatnonzero(near)
    if candidates.size:
        return candidates[bbox.contains(xyz[candidates])]
    return candidates


def enlarge_and_merge(
    proposal: Proposal,
    cloud: PointCloud,
    ground_mask: np.ndarray,
    params: RefineParams,
    exclude: np.ndarray | None = None,
) -> Proposal:
    """Enlarge the proposal's box and append contained ground points.

    Only ground-masked points are merged (non-ground points already belong
    to clusters); `exclude` marks points some earlier proposal claimed so
    no point ends up in two proposals. Original members are always kept.
    """
    bbox = enlarge_bbox(proposal.bbox, params)
    eligible = ground_mask if exclude is None else (ground_mask & ~exclude)
    merged = merge_candidates(bbox, cloud.xyz, eligible)
    members = np.concatenate([proposal.member_indices, merged])
    return replace(proposal, member_indices=members, bbox=bbox)

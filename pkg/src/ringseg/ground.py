"""Segmented iterative ground-plane estimation and ground-point removal.

The scene is split into equal-width segments along the driving (x) axis;
each segment seeds a plane from its lowest points and alternates total
least-squares fitting with inlier re-selection. The final ground mask is
the union of the per-segment inlier sets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import DegenerateGeometryError

log = logging.getLogger(__name__)

# two smallest covariance eigenvalues closer than this have no unique
# smallest-variance direction
_EIG_DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class GroundParams:
    n_seg: int = 3
    n_iter: int = 3
    n_lpr: int = 20
    th_seeds: float = 0.4
    th_dist: float = 0.3

    def __post_init__(self):
        if self.n_seg < 1:
            raise ValueError("n_seg must be >= 1")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.n_lpr < 3:
            raise ValueError("n_lpr must be >= 3")
        if self.th_seeds <= 0:
            raise ValueError("th_seeds must be > 0")
        if self.th_dist <= 0:
            raise ValueError("th_dist must be > 0")


@dataclass(frozen=True)
class PlaneModel:
    """Plane {p : normal . p + offset = 0} with unit normal, positive z."""

    normal: np.ndarray
    offset: float
    segment_index: int = -1

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)

    def distances(self, xyz: np.ndarray) -> np.ndarray:
        """Perpendicular point-plane distances (absolute)."""
        return np.abs(xyz @ self.normal + self.offset)


def split_segments(cloud: PointCloud, n_seg: int) -> np.ndarray:
    """Equal-width partition of the x range into n_seg bins.

    Points exactly on an interior boundary fall into the lower bin; the
    maximum-x point falls into bin n_seg - 1.
    """
    if n_seg < 1:
        raise ValueError("n_seg must be >= 1")
    x = cloud.xyz[:, 0]
    if x.size == 0:
        return np.empty(0, dtype=np.int64)
    lo = x.min()
    width = (x.max() - lo) / n_seg
    if width == 0.0:
        return np.zeros(x.size, dtype=np.int64)
    idx = np.ceil((x - lo) / width).astype(np.int64) - 1
    return np.clip(idx, 0, n_seg - 1)


def _seed_indices(z: np.ndarray, n_lpr: int, th_seeds: float) -> np.ndarray:
    if z.size == 0:
        raise ValueError("segment must be non-empty")
    k = min(n_lpr, z.size)
    lowest = np.partition(z, k - 1)[:k]
    return np.flatnonzero(z < lowest.mean() + th_seeds)


def extract_initial_seeds(points: np.ndarray, n_lpr: int, th_seeds: float) -> np.ndarray:
    """Seed indices: every point lower than (mean of n_lpr lowest) + th_seeds.

    The mean of the lowest points is a robust stand-in for the ground level;
    the band above it collects the seed set. Never empty: the lowest point
    always qualifies.
    """
    return _seed_indices(np.asarray(points)[:, 2], n_lpr, th_seeds)


def _fit_plane_t(pts_t: np.ndarray, segment_index: int = -1) -> PlaneModel:
    """Total least squares on a (3, n) column-point matrix (hot layout)."""
    m = pts_t.shape[1]
    if m < 3:
        raise DegenerateGeometryError(f"{m} point(s), need >= 3")
    # gemv mean: axis reductions on gathered (often F-ordered) arrays are slow
    centroid = pts_t @ np.full(m, 1.0 / m)
    centered = pts_t - centroid[:, None]
    cov = (centered @ centered.T) / m
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[1] - eigvals[0] <= _EIG_DEGENERACY_TOL:
        raise DegenerateGeometryError("covariance has no unique smallest eigenvalue")
    normal = eigvecs[:, 0]
    if normal[2] < 0:
        normal = -normal
    return PlaneModel(normal=normal, offset=float(-normal @ centroid),
                      segment_index=segment_index)


def fit_plane(points: np.ndarray, segment_index: int = -1) -> PlaneModel:
    """Total least-squares plane through the centroid.

    The normal is the smallest-eigenvalue eigenvector of the covariance
    matrix, oriented to positive z. Raises DegenerateGeometryError when
    fewer than 3 points are given or the two smallest eigenvalues coincide
    (collinear or otherwise direction-free geometry).
    """
    points = np.asarray(points, dtype=np.float64)
    return _fit_plane_t(np.ascontiguousarray(points.T), segment_index)


def ground_plane_fit(
    cloud: PointCloud,
    segment_idx: np.ndarray,
    params: GroundParams,
) -> tuple[np.ndarray, list[PlaneModel | None]]:
    """Iterative per-segment ground extraction.

    Per segment: seed from the low-height band, then n_iter rounds of
    fit-plane / re-select points within th_dist perpendicular distance.
    A segment whose fit degenerates (or that is empty) contributes no
    ground points and a warning; the frame is never aborted.

    Returns (ground mask over the full cloud, plane per segment).
    """
    n = len(cloud)
    mask = np.zeros(n, dtype=bool)
    planes: list[PlaneModel | None] = [None] * params.n_seg
    for seg in range(params.n_seg):
        members = np.flatnonzero(segment_idx == seg)
        if members.size == 0:
            log.warning("segment %d: empty, no ground contribution", seg)
            continue
        pts_t = cloud.xyz.T[:, members]
        ground_sel = _seed_indices(np.ascontiguousarray(pts_t[2]),
                                   params.n_lpr, params.th_seeds)
        model = None
        try:
            for _ in range(params.n_iter):
                model = _fit_plane_t(pts_t[:, ground_sel], segment_index=seg)
                dist = np.abs(model.normal @ pts_t + model.offset)
                ground_sel = np.flatnonzero(dist < params.th_dist)
        except DegenerateGeometryError as exc:
            log.warning("segment %d: degenerate ground fit (%s), skipped", seg, exc)
            continue
        planes[seg] = model
        mask[members[ground_sel]] = True
    return mask, planes

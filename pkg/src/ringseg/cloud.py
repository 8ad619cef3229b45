"""Point-cloud data model, binary file I/O, and ring-index assignment.

A cloud is stored columnar (coordinate matrix plus parallel attribute
arrays) because the pipeline streams over single attributes: heights for
ground seeding, azimuth for ring tracing. Scan order is preserved from the
source file and is load-bearing for ring assignment and clustering.
"""

from __future__ import annotations

import logging
from dataclasses import InitVar, dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import AlignmentError, FileFormatError, InvalidClassError, ScanFormatError
from . import kernels

log = logging.getLogger(__name__)

POINT_RECORD_BYTES = 16  # 4 x little-endian float32: x, y, z, intensity


class ClassId(IntEnum):
    BACKGROUND = 0
    CAR = 1
    PEDESTRIAN = 2
    CYCLIST = 3


CLASS_NAMES = {
    ClassId.BACKGROUND: "background",
    ClassId.CAR: "car",
    ClassId.PEDESTRIAN: "pedestrian",
    ClassId.CYCLIST: "cyclist",
}
FOREGROUND_CLASSES = (ClassId.CAR, ClassId.PEDESTRIAN, ClassId.CYCLIST)


class Point(NamedTuple):
    """One sensor return in the global (sensor-centred) frame."""

    x: float
    y: float
    z: float
    intensity: float


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    """Immutable columnar point cloud in scan order.

    xyz: (n, 3) float64 coordinates in meters.
    intensity: (n,) float64 in [0, 1].
    ring_ids: optional (n,) int32, non-decreasing in scan order.
    labels: optional (n,) uint8 class ids.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    ring_ids: np.ndarray | None = None
    labels: np.ndarray | None = None
    # content scans are skipped for derived clouds whose invariants are
    # inherited (subsets, attribute attachment); shape checks always run
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        xyz = _readonly(np.ascontiguousarray(self.xyz, dtype=np.float64))
        inten = _readonly(np.ascontiguousarray(self.intensity, dtype=np.float64))
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", inten)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (n, 3), got {xyz.shape}")
        n = xyz.shape[0]
        if inten.shape != (n,):
            raise AlignmentError(f"intensity length {inten.shape[0]} != cloud length {n}")
        if validate:
            if not np.all(np.isfinite(xyz)):
                raise ValueError("non-finite coordinates are not admitted past ingestion")
            if n and (inten.min() < 0.0 or inten.max() > 1.0):
                raise ValueError("intensity must lie in [0, 1]")
        if self.ring_ids is not None:
            rings = _readonly(np.ascontiguousarray(self.ring_ids, dtype=np.int32))
            object.__setattr__(self, "ring_ids", rings)
            if rings.shape != (n,):
                raise AlignmentError(f"ring_ids length {rings.shape[0]} != cloud length {n}")
        if self.labels is not None:
            labels = _readonly(np.ascontiguousarray(self.labels, dtype=np.uint8))
            object.__setattr__(self, "labels", labels)
            if labels.shape != (n,):
                raise AlignmentError(f"labels length {labels.shape[0]} != cloud length {n}")
            if n and labels.max() > max(ClassId):
                raise InvalidClassError(f"label value {labels.max()} > {max(ClassId)}")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def point(self, i: int) -> Point:
        return Point(*self.xyz[i], self.intensity[i])

    def with_ring_ids(self, ring_ids: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, ring_ids=ring_ids,
                          labels=self.labels, validate=False)

    def with_labels(self, labels: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, ring_ids=self.ring_ids,
                          labels=labels, validate=False)

    def select(self, index: np.ndarray) -> "PointCloud":
        """Subset by index array or boolean mask, preserving scan order."""
        return PointCloud(
            xyz=self.xyz[index],
            intensity=self.intensity[index],
            ring_ids=None if self.ring_ids is None else self.ring_ids[index],
            labels=None if self.labels is None else self.labels[index],
            validate=False,
        )


def load_point_cloud(path) -> PointCloud:
    """Read a binary point-cloud file (packed x, y, z, intensity float32 LE).

    Records containing non-finite values are dropped with a logged report of
    their indices; intensity is clamped into [0, 1].
    """
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % POINT_RECORD_BYTES != 0:
        raise FileFormatError(
            f"{path}: size {raw.size} is not a multiple of {POINT_RECORD_BYTES}"
        )
    rec = raw.view("<f4").reshape(-1, 4).astype(np.float64)
    finite = np.all(np.isfinite(rec), axis=1)
    if not finite.all():
        bad = np.flatnonzero(~finite)
        log.warning(
            "%s: dropped %d non-finite record(s), first indices %s",
            path, bad.size, bad[:8].tolist(),
        )
        rec = rec[finite]
    return PointCloud(xyz=rec[:, :3], intensity=np.clip(rec[:, 3], 0.0, 1.0))


def save_point_cloud(cloud: PointCloud, path) -> None:
    """Write the cloud in the same packed float32 record format."""
    rec = np.empty((len(cloud), 4), dtype="<f4")
    rec[:, :3] = cloud.xyz
    rec[:, 3] = cloud.intensity
    rec.tofile(path)


def load_labels(path, expected_len: int) -> np.ndarray:
    """Read per-point class labels (one unsigned byte per point)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != expected_len:
        raise AlignmentError(
            f"{path}: {raw.size} labels for a cloud of {expected_len} points"
        )
    if raw.size and raw.max() > max(ClassId):
        bad = int(np.flatnonzero(raw > max(ClassId))[0])
        raise InvalidClassError(f"{path}: class {raw[bad]} at index {bad}")
    return raw


def save_labels(labels: np.ndarray, path) -> None:
    np.asarray(labels, dtype=np.uint8).tofile(path)


def compute_quadrants(xyz: np.ndarray) -> np.ndarray:
    """Per-point azimuth quadrant, 1..4 counter-clockwise, 0 for on-axis.

    Points with x == 0 or y == 0 get 0; the tracer makes them inherit the
    previous point's quadrant so measurement jitter on an axis cannot fake
    a revolution boundary.
    """
    x, y = xyz[:, 0], xyz[:, 1]
    q = np.zeros(xyz.shape[0], dtype=np.int8)
    q[(x > 0) & (y > 0)] = 1
    q[(x < 0) & (y > 0)] = 2
    q[(x < 0) & (y < 0)] = 3
    q[(x > 0) & (y < 0)] = 4
    return q


def assign_rings(cloud: PointCloud, num_rings: int) -> PointCloud:
    """Assign a ring index to every point by tracing azimuth quadrants.

    A rotating scanner emits each ring as one full revolution; in scan order
    the quadrant sequence of (x, y) cycles 1 -> 2 -> 3 -> 4, and a 4 -> 1
    transition marks the start of the next ring. Partial final revolutions
    are fine; more revolutions than `num_rings` is a scan-format error.
    """
    if num_rings < 1:
        raise ValueError("num_rings must be >= 1")
    if len(cloud) == 0:
        return cloud.with_ring_ids(np.empty(0, dtype=np.int32))
    q = compute_quadrants(cloud.xyz)
    ring_ids, revolutions = kernels.trace_rings(q)
    if revolutions > num_rings:
        raise ScanFormatError(
            f"detected {revolutions} revolutions but num_rings={num_rings}"
        )
    return cloud.with_ring_ids(ring_ids)

import numpy as np
import pytest

from ringseg import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_ring_scene(rng, max_points: int = 300, min_rings: int = 4,
                      max_rings: int = 8) -> PointCloud:
    """Random multi-ring cloud satisfying the clustering preconditions:
    ring ids contiguous non-decreasing, azimuth ascending within a ring.

    Azimuths come from a mix of uniform spread and tight blobs so that
    runs, wraparound pairs and cross-ring merges all occur.
    """
    num_rings = int(rng.integers(min_rings, max_rings + 1))
    total = int(rng.integers(num_rings, max_points + 1))
    counts = rng.multinomial(total, np.ones(num_rings) / num_rings)
    xyz = []
    ring_ids = []
    for r, count in enumerate(counts):
        if count == 0:
            continue
        if rng.random() < 0.5:
            az = np.sort(rng.uniform(0.0, 2 * np.pi, count))
        else:
            centers = rng.uniform(0.0, 2 * np.pi, max(1, count // 20))
            az = np.sort(
                (rng.choice(centers, count) + rng.normal(0, 0.08, count)) % (2 * np.pi)
            )
        radius = rng.uniform(2.0, 30.0, count)
        z = rng.uniform(-1.0, 2.0, count) + 0.02 * r
        xyz.append(np.column_stack([radius * np.cos(az), radius * np.sin(az), z]))
        ring_ids.append(np.full(count, r, dtype=np.int32))
    xyz = np.concatenate(xyz)
    ring_ids = np.concatenate(ring_ids)
    return PointCloud(xyz=xyz, intensity=np.zeros(len(xyz)), ring_ids=ring_ids)


def random_cloud(rng, n: int) -> PointCloud:
    """Random cloud with float32-representable values (file round-trips)."""
    xyz = rng.uniform(-80, 80, (n, 3)).astype(np.float32).astype(np.float64)
    intensity = rng.random(n, dtype=np.float32).astype(np.float64)
    return PointCloud(xyz=xyz, intensity=intensity)

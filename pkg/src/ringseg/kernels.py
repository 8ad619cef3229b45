"""Hot inner-loop kernels with numba and pure-numpy backends.

The two sequential scans that dominate per-frame cost — ring tracing and
ring-order clustering — cannot be vectorized (each step depends on the
previous one), so they are written once as plain functions over numpy
arrays and compiled with numba's @njit when available. The uncompiled
function is kept as the fallback backend; both backends execute the same
source, so their outputs are identical.

Backend selection: the environment variable RINGSEG_NUMBA (default "1")
chooses the startup backend; set RINGSEG_NUMBA=0 to force pure numpy.
`select_backend()` switches at runtime, which the benchmark CLI uses to
time both paths on the same frame.

All transcendental inputs (azimuth, search windows) are computed by the
caller with numpy so the kernels need only arithmetic, comparisons and
sqrt-free squared distances; this keeps the two backends bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Kernel sources (backend-neutral)


def _trace_rings(quadrant: np.ndarray):
    """Scan quadrant codes (0 = on-axis, 1..4 CCW) and count revolutions.

    On-axis points inherit the previously seen quadrant; a 4 -> 1
    transition increments the ring index. Returns (ring_ids, revolutions).
    """
    n = quadrant.shape[0]
    ring_ids = np.zeros(n, dtype=np.int32)
    prev = 0
    ring = 0
    for i in range(n):
        q = quadrant[i]
        if q == 0:
            q = prev
        if prev == 4 and q == 1:
            ring += 1
        prev = q
        ring_ids[i] = ring
    return ring_ids, ring + 1


def _cluster_scan(x, y, z, az, halfwin, starts, th_ring, th_prop):
    """One-pass ring clustering: intra-ring runs + previous-ring propagation.

    Points are grouped contiguously per ring by `starts` (length R+1
    offsets) and sorted by azimuth within each ring. Consecutive points of
    a ring join the same run when closer than th_ring (the ring is closed:
    first and last points are also tested). Each point additionally links
    to its nearest neighbour on ring r-1 when that distance is below
    th_prop; the neighbour search is restricted to the azimuth window
    ±halfwin[i], which the caller sizes so no neighbour within th_prop can
    be missed. Conflicting labels are recorded as merge pairs and resolved
    afterwards; a point with no qualifying neighbour opens a new label.

    Returns (raw_labels, merge_pairs, n_merges, label_count).
    """
    n = x.shape[0]
    num_rings = starts.shape[0] - 1
    labels = np.zeros(n, dtype=np.int64)
    merges = np.empty((n, 2), dtype=np.int64)
    n_merges = 0
    next_label = 1
    th_ring2 = th_ring * th_ring
    th_prop2 = th_prop * th_prop
    for r in range(num_rings):
        s = starts[r]
        e = starts[r + 1]
        if s == e:
            continue
        if r > 0:
            ps = starts[r - 1]
            pe = starts[r]
        else:
            ps = 0
            pe = 0
        for i in range(s, e):
            lab = 0
            if i > s:
                dx = x[i] - x[i - 1]
                dy = y[i] - y[i - 1]
                dz = z[i] - z[i - 1]
                if dx * dx + dy * dy + dz * dz < th_ring2:
                    lab = labels[i - 1]
            if pe > ps:
                # candidate index ranges on the previous ring, ascending,
                # accounting for azimuth wraparound at 0/2pi
                w = halfwin[i]
                if w >= np.pi:
                    a1, b1 = ps, pe
                    a2, b2 = pe, pe
                else:
                    lo = az[i] - w
                    hi = az[i] + w
                    if lo < 0.0:
                        a1 = ps
                        b1 = _bisect_right(az, ps, pe, hi)
                        a2 = _bisect_left(az, ps, pe, lo + TWO_PI)
                        b2 = pe
                    elif hi > TWO_PI:
                        a1 = ps
                        b1 = _bisect_right(az, ps, pe, hi - TWO_PI)
                        a2 = _bisect_left(az, ps, pe, lo)
                        b2 = pe
                    else:
                        a1 = _bisect_left(az, ps, pe, lo)
                        b1 = _bisect_right(az, ps, pe, hi)
                        a2, b2 = pe, pe
                best = -1
                best_d2 = th_prop2
                for j in range(a1, b1):
                    dx = x[i] - x[j]
                    dy = y[i] - y[j]
                    dz = z[i] - z[j]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2:
                        best_d2 = d2
                        best = j
                for j in range(a2, b2):
                    dx = x[i] - x[j]
                    dy = y[i] - y[j]
                    dz = z[i] - z[j]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2:
                        best_d2 = d2
                        best = j
                if best >= 0:
                    plab = labels[best]
                    if lab == 0:
                        lab = plab
                    elif lab != plab:
                        merges[n_merges, 0] = lab
                        merges[n_merges, 1] = plab
                        n_merges += 1
            if lab == 0:
                lab = next_label
                next_label += 1
            labels[i] = lab
        # azimuth wraparound closes the ring: test first against last
        if e - s >= 2:
            dx = x[s] - x[e - 1]
            dy = y[s] - y[e - 1]
            dz = z[s] - z[e - 1]
            if dx * dx + dy * dy + dz * dz < th_ring2:
                la = labels[s]
                lb = labels[e - 1]
                if la != lb:
                    merges[n_merges, 0] = la
                    merges[n_merges, 1] = lb
                    n_merges += 1
    return labels, merges, n_merges, next_label - 1


def _bisect_left_src(a, lo, hi, v):
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _bisect_right_src(a, lo, hi, v):
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


# pure-python backend binds the plain helpers
_bisect_left = _bisect_left_src
_bisect_right = _bisect_right_src

_BACKENDS: dict[str, dict] = {
    "numpy": {"trace_rings": _trace_rings, "cluster_scan": _cluster_scan},
}

try:
    from numba import njit

    _bisect_left_jit = njit(cache=True, inline="always")(_bisect_left_src)
    _bisect_right_jit = njit(cache=True, inline="always")(_bisect_right_src)

    def _with_jit_bisect(fn):
        # rebind the module-level bisect helpers seen by the compiled body
        g = dict(fn.__globals__)
        g["_bisect_left"] = _bisect_left_jit
        g["_bisect_right"] = _bisect_right_jit
        import types

        return types.FunctionType(fn.__code__, g, fn.__name__, fn.__defaults__)

    _BACKENDS["numba"] = {
        "trace_rings": njit(cache=True)(_trace_rings),
        "cluster_scan": njit(cache=True)(_with_jit_bisect(_cluster_scan)),
    }
except ImportError:  # pragma: no cover - numba is a declared dependency
    pass


def _env_default() -> str:
    flag = os.environ.get("RINGSEG_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or "numba" not in _BACKENDS:
        return "numpy"
    return "numba"


_active = _env_default()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active


def select_backend(name: str) -> str:
    """Switch the module-level backend; returns the previous one."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    previous = _active
    _active = name
    return previous


# ---------------------------------------------------------------------------
# Dispatching entry points used by the rest of the package


def trace_rings(quadrant: np.ndarray, backend: str | None = None):
    fn = _BACKENDS[backend or _active]["trace_rings"]
    return fn(np.ascontiguousarray(quadrant, dtype=np.int8))


def cluster_scan(x, y, z, az, halfwin, starts, th_ring, th_prop,
                 backend: str | None = None):
    fn = _BACKENDS[backend or _active]["cluster_scan"]
    return fn(x, y, z, az, halfwin, starts, float(th_ring), float(th_prop))

"""Synthetic rotating-scanner scenes with exact ground truth.

A desk-scale stand-in for real drives: rays are cast per ring (elevation)
and azimuth step against an infinite ground plane and simple object
primitives (boxes for cars, cylinders for pedestrians, box+cylinder for
cyclists). Every emitted point carries its true ring index, class label
and ground membership, which the pipeline tests use as oracles.

Specs are validated so that every ray returns: elevations must all strike
the ground when no object is in the way, which keeps each ring a complete
revolution and makes quadrant-traced ring ids exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import ClassId, PointCloud
from .errors import SceneValidationError

TWO_PI = 2.0 * math.pi

# fraction of a bike's height at which the rider cylinder starts
_RIDER_BASE_FRACTION = 0.55


@dataclass(frozen=True)
class ObjectSpec:
    """One placed primitive. Dimensions are full lengths in meters.

    z_base None places the bottom on the local ground (plus clearance);
    an explicit z_base is validated against the ground instead.
    """

    class_id: int
    shape: str  # "box" | "cylinder" | "composite"
    x: float
    y: float
    yaw_deg: float = 0.0
    length: float = 0.0
    width: float = 0.0
    height: float = 0.0
    radius: float = 0.0
    rider_height: float = 0.0
    clearance: float = 0.0
    z_base: float | None = None

    def footprint_radius(self) -> float:
        box_r = math.hypot(self.length, self.width) / 2.0
        if self.shape == "box":
            return box_r
        if self.shape == "cylinder":
            return self.radius
        return max(box_r, self.radius)

    def top_height(self) -> float:
        """Highest occupied point above the object's base."""
        if self.shape == "box":
            return self.height
        if self.shape == "cylinder":
            return self.height
        return max(self.height, _RIDER_BASE_FRACTION * self.height + self.rider_height)

    def validate(self) -> None:
        if self.class_id not in tuple(int(c) for c in ClassId):
            raise SceneValidationError(f"unknown class id {self.class_id}")
        if self.shape not in ("box", "cylinder", "composite"):
            raise SceneValidationError(f"unknown shape {self.shape!r}")
        if self.shape in ("box", "composite"):
            if min(self.length, self.width, self.height) <= 0:
                raise SceneValidationError("box dimensions must be positive")
        if self.shape in ("cylinder", "composite"):
            if self.radius <= 0:
                raise SceneValidationError("cylinder radius must be positive")
        if self.shape == "cylinder" and self.height <= 0:
            raise SceneValidationError("cylinder height must be positive")
        if self.shape == "composite" and self.rider_height <= 0:
            raise SceneValidationError("composite rider_height must be positive")


@dataclass(frozen=True)
class SceneSpec:
    num_rings: int = 64
    points_per_ring: int = 1600
    elevation_min_deg: float = -24.8
    elevation_max_deg: float = -0.4
    sensor_height: float = 1.73
    ground_tilt_deg: float = 0.0
    noise_sigma: float = 0.0
    rng_seed: int = 0
    objects: tuple[ObjectSpec, ...] = field(default_factory=tuple)

    def ground_plane(self) -> tuple[np.ndarray, float]:
        """Unit normal and offset of {p : n.p + offset = 0}.

        Tilt rotates the plane about the y axis (uphill toward +x); the
        plane always passes through (0, 0, -sensor_height).
        """
        t = math.radians(self.ground_tilt_deg)
        normal = np.array([-math.sin(t), 0.0, math.cos(t)])
        return normal, self.sensor_height * math.cos(t)


@dataclass(frozen=True)
class SyntheticScene:
    """Generated cloud plus full ground truth."""

    cloud: PointCloud  # labels attached
    ring_ids: np.ndarray
    ground_mask: np.ndarray
    owner: np.ndarray  # -1 for ground, else index into spec.objects
    ground_normal: np.ndarray
    ground_offset: float


def _ground_height(normal: np.ndarray, offset: float, x, y):
    return -(offset + normal[0] * x + normal[1] * y) / normal[2]


def _object_z_base(obj: ObjectSpec, normal: np.ndarray, offset: float) -> float:
    """Bottom height keeping the whole footprint at/above the local ground."""
    r = obj.footprint_radius()
    probes_x = np.array([obj.x, obj.x + r, obj.x - r, obj.x, obj.x])
    probes_y = np.array([obj.y, obj.y, obj.y, obj.y + r, obj.y - r])
    ground = _ground_height(normal, offset, probes_x, probes_y).max()
    if obj.z_base is not None:
        if obj.z_base < ground - 1e-9:
            raise SceneValidationError(
                f"object at ({obj.x:.2f}, {obj.y:.2f}) sits below the ground plane"
            )
        return obj.z_base
    return float(ground + obj.clearance)


def _ray_box(dirs: np.ndarray, center: np.ndarray, half: np.ndarray, yaw: float) -> np.ndarray:
    """Slab-method entry distance per ray, inf where missed."""
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> box
    op = rot @ (-center)
    dp = dirs @ rot.T
    par = np.abs(dp) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - op) / dp
        t2 = (half - op) / dp
    inside = np.abs(op) <= half
    tlo = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    thi = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    tnear = tlo.max(axis=1)
    tfar = thi.min(axis=1)
    hit = (tnear <= tfar) & (tnear > 1e-9)
    return np.where(hit, tnear, np.inf)


def _ray_cylinder(dirs: np.ndarray, cx: float, cy: float, radius: float,
                  zb: float, zt: float) -> np.ndarray:
    """Capped-cylinder entry distance per ray (sensor assumed outside)."""
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    a = dx * dx + dy * dy
    b = -2.0 * (cx * dx + cy * dy)
    c0 = cx * cx + cy * cy - radius * radius
    disc = b * b - 4.0 * a * c0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a)
    z_side = t_side * dz
    side_ok = (disc >= 0) & (a > 1e-12) & (t_side > 1e-9) & (z_side >= zb) & (z_side <= zt)
    best = np.where(side_ok, t_side, np.inf)
    for z_cap in (zt, zb):
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cap = z_cap / dz
        px = t_cap * dx - cx
        py = t_cap * dy - cy
        cap_ok = (np.abs(dz) > 1e-12) & (t_cap > 1e-9) & (px * px + py * py <= radius * radius)
        best = np.minimum(best, np.where(cap_ok, t_cap, np.inf))
    return best


def _object_distances(obj: ObjectSpec, z_base: float, dirs: np.ndarray) -> np.ndarray:
    yaw = math.radians(obj.yaw_deg)
    if obj.shape in ("box", "composite"):
        center = np.array([obj.x, obj.y, z_base + obj.height / 2.0])
        half = np.array([obj.length / 2.0, obj.width / 2.0, obj.height / 2.0])
        t = _ray_box(dirs, center, half, yaw)
    else:
        t = np.full(dirs.shape[0], np.inf)
    if obj.shape == "cylinder":
        t = np.minimum(t, _ray_cylinder(dirs, obj.x, obj.y, obj.radius,
                                        z_base, z_base + obj.height))
    elif obj.shape == "composite":
        rb = z_base + _RIDER_BASE_FRACTION * obj.height
        t = np.minimum(t, _ray_cylinder(dirs, obj.x, obj.y, obj.radius,
                                        rb, rb + obj.rider_height))
    return t


def _validate_layout(spec: SceneSpec) -> None:
    objs = spec.objects
    for obj in objs:
        obj.validate()
        if math.hypot(obj.x, obj.y) < obj.footprint_radius() + 0.5:
            raise SceneValidationError("object footprint overlaps the sensor origin")
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            gap = math.hypot(objs[i].x - objs[j].x, objs[i].y - objs[j].y)
            if gap < objs[i].footprint_radius() + objs[j].footprint_radius():
                raise SceneValidationError(f"objects {i} and {j} interpenetrate")


def generate_synthetic_scene(spec: SceneSpec) -> SyntheticScene:
    """Cast all rays in scan order (ring-major, azimuth ascending).

    Raises SceneValidationError for physically inconsistent specs or when
    some ray would not return (incomplete rings would make ring ids
    untraceable from the data).
    """
    if spec.num_rings < 1 or spec.points_per_ring < 8:
        raise SceneValidationError("need num_rings >= 1 and points_per_ring >= 8")
    if spec.elevation_min_deg > spec.elevation_max_deg:
        raise SceneValidationError("elevation_min_deg > elevation_max_deg")
    _validate_layout(spec)

    normal, offset = spec.ground_plane()
    z_bases = [_object_z_base(obj, normal, offset) for obj in spec.objects]

    if spec.num_rings == 1:
        elevations = np.array([math.radians(spec.elevation_min_deg)])
    else:
        elevations = np.radians(
            np.linspace(spec.elevation_min_deg, spec.elevation_max_deg, spec.num_rings)
        )
    a = spec.points_per_ring
    step = TWO_PI / a
    azimuths = step / 2.0 + step * np.arange(a)  # stays off the axes
    cos_az, sin_az = np.cos(azimuths), np.sin(azimuths)

    rng = np.random.default_rng(spec.rng_seed)
    all_t = np.empty(spec.num_rings * a)
    all_dirs = np.empty((spec.num_rings * a, 3))
    owner = np.empty(spec.num_rings * a, dtype=np.int64)

    for k, el in enumerate(elevations):
        ce, se = math.cos(el), math.sin(el)
        dirs = np.column_stack([ce * cos_az, ce * sin_az, np.full(a, se)])
        nd = dirs @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ground = np.where(nd < -1e-12, -offset / nd, np.inf)
        t_stack = [t_ground]
        for obj, zb in zip(spec.objects, z_bases):
            t_stack.append(_object_distances(obj, zb, dirs))
        t_all = np.vstack(t_stack)
        who = t_all.argmin(axis=0)
        t_min = t_all[who, np.arange(a)]
        if not np.all(np.isfinite(t_min)):
            raise SceneValidationError(
                f"ring {k} (elevation {math.degrees(el):.2f} deg) has rays "
                "without a return; lower elevation_max_deg or the ground tilt"
            )
        sl = slice(k * a, (k + 1) * a)
        all_t[sl] = t_min
        all_dirs[sl] = dirs
        owner[sl] = who - 1  # -1 = ground

    if spec.noise_sigma > 0:
        all_t = all_t + rng.normal(0.0, spec.noise_sigma, all_t.shape[0])
        all_t = np.maximum(all_t, 1e-3)
    intensity = rng.uniform(0.0, 1.0, all_t.shape[0])

    xyz = all_dirs * all_t[:, None]
    labels = np.zeros(xyz.shape[0], dtype=np.uint8)
    hit_obj = owner >= 0
    if hit_obj.any():
        class_of = np.array([obj.class_id for obj in spec.objects], dtype=np.uint8)
        labels[hit_obj] = class_of[owner[hit_obj]]
    ring_ids = np.repeat(np.arange(spec.num_rings, dtype=np.int32), a)

    cloud = PointCloud(xyz=xyz, intensity=intensity, labels=labels)
    return SyntheticScene(
        cloud=cloud,
        ring_ids=ring_ids,
        ground_mask=~hit_obj,
        owner=owner,
        ground_normal=normal,
        ground_offset=offset,
    )


_SCENE_FIELDS = {
    "seed": ("rng_seed", int),
    "num_rings": ("num_rings", int),
    "points_per_ring": ("points_per_ring", int),
    "elevation_min_deg": ("elevation_min_deg", float),
    "elevation_max_deg": ("elevation_max_deg", float),
    "sensor_height": ("sensor_height", float),
    "ground_tilt_deg": ("ground_tilt_deg", float),
    "noise_sigma": ("noise_sigma", float),
}
_OBJECT_FIELDS = {
    "class": ("class_id", None),  # name or integer
    "shape": ("shape", str),
    "x": ("x", float),
    "y": ("y", float),
    "yaw_deg": ("yaw_deg", float),
    "length": ("length", float),
    "width": ("width", float),
    "height": ("height", float),
    "radius": ("radius", float),
    "rider_height": ("rider_height", float),
    "clearance": ("clearance", float),
    "z_base": ("z_base", float),
}
_CLASS_BY_NAME = {"background": 0, "car": 1, "pedestrian": 2, "cyclist": 3}


def scene_from_file(path) -> SceneSpec:
    """Build a SceneSpec from a `key = value` file.

    Scalar keys mirror SceneSpec fields (`seed` maps to rng_seed); objects
    use `objects.<index>.<field>`, e.g. `objects.0.class = car`.
    """
    from .config import read_kv_file
    from .errors import ConfigError

    raw = read_kv_file(path)
    scene_kwargs: dict = {}
    object_kwargs: dict[int, dict] = {}
    for key, value in raw.items():
        if key.startswith("objects."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in _OBJECT_FIELDS:
                raise ConfigError(key, "expected objects.<index>.<field>")
            field_name, caster = _OBJECT_FIELDS[parts[2]]
            if field_name == "class_id":
                parsed = (_CLASS_BY_NAME[value.lower()]
                          if value.lower() in _CLASS_BY_NAME else int(value))
            else:
                try:
                    parsed = caster(value)
                except ValueError:
                    raise ConfigError(key, f"invalid value {value!r}")
            object_kwargs.setdefault(int(parts[1]), {})[field_name] = parsed
        elif key in _SCENE_FIELDS:
            field_name, caster = _SCENE_FIELDS[key]
            try:
                scene_kwargs[field_name] = caster(value)
            except ValueError:
                raise ConfigError(key, f"invalid value {value!r}")
        else:
            raise ConfigError(key, "unknown scene key")
    objects = []
    for idx in sorted(object_kwargs):
        kwargs = object_kwargs[idx]
        if "class_id" not in kwargs or "shape" not in kwargs:
            raise ConfigError(f"objects.{idx}", "class and shape are required")
        objects.append(ObjectSpec(**kwargs))
    return SceneSpec(objects=tuple(objects), **scene_kwargs)


def sample_traffic_scene(
    seed: int,
    n_objects: int | None = None,
    num_rings: int = 64,
    points_per_ring: int = 1600,
    noise_sigma: float = 0.02,
    ground_tilt_deg: float = 0.0,
) -> SceneSpec:
    """Random benchmark scene: mixed cars/pedestrians/cyclists on open ground.

    Objects are rejection-placed with disjoint footprints at 8-35 m; cars
    and cyclists face 15-75 degrees off the line of sight so two faces are
    visible and both horizontal extents are observable.
    """
    rng = np.random.default_rng([seed, 0xB07])
    if n_objects is None:
        n_objects = int(rng.integers(3, 11))
    placed: list[ObjectSpec] = []
    attempts = 0
    while len(placed) < n_objects and attempts < 200 * n_objects:
        attempts += 1
        cls = int(rng.choice([int(ClassId.CAR), int(ClassId.PEDESTRIAN),
                              int(ClassId.CYCLIST)]))
        # pedestrians stay nearer: a thin cylinder's visible depth shrinks
        # below the size priors once azimuth sampling gets too coarse
        dist = rng.uniform(8.0, 20.0 if cls == int(ClassId.PEDESTRIAN) else 35.0)
        angle = rng.uniform(0.0, TWO_PI)
        x, y = dist * math.cos(angle), dist * math.sin(angle)
        sight_deg = math.degrees(angle)
        # both box faces visible and neither so grazing that the azimuth
        # step stretches along-face point spacing past th_ring
        skew = float(rng.uniform(25.0, 65.0)) * (1 if rng.integers(2) else -1)
        if cls == int(ClassId.CAR):
            obj = ObjectSpec(
                class_id=cls, shape="box", x=x, y=y, yaw_deg=sight_deg + skew,
                length=float(rng.uniform(3.8, 4.8)),
                width=float(rng.uniform(1.7, 2.0)),
                height=float(rng.uniform(1.4, 1.6)),
            )
        elif cls == int(ClassId.PEDESTRIAN):
            obj = ObjectSpec(
                class_id=cls, shape="cylinder", x=x, y=y,
                radius=float(rng.uniform(0.3, 0.42)),
                height=float(rng.uniform(1.6, 1.8)),
            )
        else:
            obj = ObjectSpec(
                class_id=cls, shape="composite", x=x, y=y, yaw_deg=sight_deg + skew,
                length=float(rng.uniform(1.6, 1.9)),
                width=float(rng.uniform(0.4, 0.6)),
                height=float(rng.uniform(1.0, 1.2)),
                radius=float(rng.uniform(0.22, 0.3)),
                rider_height=float(rng.uniform(0.8, 1.0)),
            )
        # keep a clustering-safe gap: more than th_prop beyond the footprints;
        # also keep azimuth spans disjoint so no object shadows another
        def _span(o):
            d = math.hypot(o.x, o.y)
            half = math.asin(min(1.0, (o.footprint_radius() + 0.3) / d))
            return math.atan2(o.y, o.x) % TWO_PI, half

        a_new, w_new = _span(obj)
        ok = True
        for p in placed:
            if (math.hypot(p.x - obj.x, p.y - obj.y)
                    <= p.footprint_radius() + obj.footprint_radius() + 1.2):
                ok = False
                break
            a_p, w_p = _span(p)
            gap = abs(a_new - a_p)
            if min(gap, TWO_PI - gap) <= w_new + w_p:
                ok = False
                break
        if ok:
            placed.append(obj)
    if len(placed) < n_objects:
        raise SceneValidationError("could not place objects without overlap")
    # tilted ground needs steeper rays so every azimuth still strikes it;
    # the fan is denser than the generic default so ring quantization does
    # not shave the visible height of far objects under the size priors
    elevation_max = min(-0.4, -(abs(ground_tilt_deg) + 0.6))
    return SceneSpec(
        num_rings=num_rings,
        points_per_ring=points_per_ring,
        elevation_min_deg=-12.0,
        elevation_max_deg=elevation_max,
        noise_sigma=noise_sigma,
        ground_tilt_deg=ground_tilt_deg,
        rng_seed=seed,
        objects=tuple(placed),
    )

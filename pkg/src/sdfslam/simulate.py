"""Deterministic synthetic 2D world and lidar simulator.

Provides ground truth for the whole test and acceptance pipeline: polygon
raycasting, Gaussian range noise, outlier injection biased toward depth
discontinuities, and dynamic segments that appear for a scheduled range of
scan indices. Everything is seeded with a portable 64-bit PCG generator, so
fixtures are reproducible across platforms and runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import LaserScan, Pose2, normalize_angle

# Beams whose true range differs from a neighbor's by more than this are
# treated as sitting on a depth discontinuity; their outlier odds are boosted.
DISCONTINUITY_STEP = 0.5
DISCONTINUITY_BOOST = 5.0


@dataclass(frozen=True)
class DynamicSegment:
    """A wall segment visible only for scan indices in [first, last]."""

    segment: tuple[float, float, float, float]
    first: int
    last: int


@dataclass(eq=False)
class World:
    """Static line segments plus optional scheduled dynamic segments."""

    static_segments: np.ndarray
    dynamic_segments: list[DynamicSegment] = field(default_factory=list)

    def __post_init__(self):
        segs = np.asarray(self.static_segments, dtype=np.float64).reshape(-1, 4)
        lengths = np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1])
        if np.any(lengths <= 1e-9):
            raise ValueError("degenerate world segment")
        self.static_segments = segs

    def segments_for(self, scan_index: int | None = None) -> np.ndarray:
        """Active segments for a scan index (static only when None)."""
        if scan_index is None or not self.dynamic_segments:
            return self.static_segments
        active = [
            d.segment
            for d in self.dynamic_segments
            if d.first <= scan_index <= d.last
        ]
        if not active:
            return self.static_segments
        return np.vstack([self.static_segments, np.asarray(active, dtype=np.float64)])


@dataclass(frozen=True)
class SensorModel:
    """Scanner parameters; defaults follow a 271-beam, 270-degree unit."""

    beam_count: int = 271
    fov: float = math.radians(270.0)
    range_min: float = 0.05
    range_max: float = 10.0
    noise_sigma: float = 0.0
    outlier_rate: float = 0.0
    outlier_mode: str = "discontinuity"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError("outlier_rate must be in [0, 1]")
        if self.outlier_mode not in ("discontinuity", "uniform"):
            raise ValueError("unknown outlier mode")

    @property
    def angle_min(self) -> float:
        return -0.5 * self.fov

    @property
    def angle_increment(self) -> float:
        if self.beam_count < 2:
            return 0.0
        return self.fov / (self.beam_count - 1)


@dataclass(eq=False)
class TrajectoryScript:
    """Timestamped waypoints; linear in position, shortest-arc in heading."""

    waypoints: list[tuple[float, Pose2]]

    def __post_init__(self):
        times = [t for t, _ in self.waypoints]
        if not times:
            raise ValueError("need at least one waypoint")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint timestamps must be strictly increasing")

    @property
    def t_start(self) -> float:
        return self.waypoints[0][0]

    @property
    def t_end(self) -> float:
        return self.waypoints[-1][0]

    def pose_at(self, t: float) -> Pose2:
        wps = self.waypoints
        if t <= wps[0][0]:
            return wps[0][1]
        if t >= wps[-1][0]:
            return wps[-1][1]
        for (ta, pa), (tb, pb) in zip(wps, wps[1:]):
            if ta <= t <= tb:
                s = (t - ta) / (tb - ta)
                return Pose2(
                    pa.x + s * (pb.x - pa.x),
                    pa.y + s * (pb.y - pa.y),
                    pa.theta + s * normalize_angle(pb.theta - pa.theta),
                )
        return wps[-1][1]


def raycast(world: World, origin, direction, range_max: float,
            scan_index: int | None = None):
    """Distance to the nearest segment hit along a ray, or None for a miss.

    ``direction`` must be a unit vector. Segments parallel to the ray and
    intersections beyond ``range_max`` do not count.
    """
    segs = world.segments_for(scan_index)
    t = _raycast_batch(segs, np.asarray(origin, dtype=np.float64),
                       np.asarray([direction], dtype=np.float64), range_max)
    return float(t[0]) if np.isfinite(t[0]) else None


def _raycast_batch(segs: np.ndarray, origin: np.ndarray, dirs: np.ndarray,
                   range_max: float) -> np.ndarray:
    """Nearest-hit distances for many rays at once; inf marks a miss."""
    ax = segs[:, 0][None, :] - origin[0]
    ay = segs[:, 1][None, :] - origin[1]
    ex = (segs[:, 2] - segs[:, 0])[None, :]
    ey = (segs[:, 3] - segs[:, 1])[None, :]
    dx = dirs[:, 0][:, None]
    dy = dirs[:, 1][:, None]

    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax * ey - ay * ex) / denom
        s = (ax * dy - ay * dx) / denom
    ok = (np.abs(denom) > 1e-12) & (s >= 0.0) & (s <= 1.0) & (t > 1e-9) & (t <= range_max)
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def _rng_for_scan(model: SensorModel, scan_index: int) -> np.random.Generator:
    seed = int(model.seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, scan_index])))


def simulate_scan(world: World, pose: Pose2, model: SensorModel,
                  scan_index: int = 0) -> tuple[LaserScan, np.ndarray]:
    """One simulated revolution plus the noise-free ground-truth ranges.

    Per beam: raycast, add Gaussian range noise, then with the (possibly
    boosted) outlier probability replace the reading by a uniform draw in
    [range_min, true range]. Injected outliers are therefore always
    premature returns, the common failure at depth discontinuities. Misses
    are emitted as +inf, which downstream validity filtering drops.
    """
    n = model.beam_count
    angles = pose.theta + model.angle_min + model.angle_increment * np.arange(n)
    dirs = np.column_stack((np.cos(angles), np.sin(angles)))
    true = _raycast_batch(world.segments_for(scan_index),
                          np.array([pose.x, pose.y]), dirs, model.range_max)

    rng = _rng_for_scan(model, scan_index)
    noise = rng.normal(0.0, model.noise_sigma, n) if model.noise_sigma > 0 else np.zeros(n)
    coins = rng.random(n)

    hit = np.isfinite(true)
    rate = np.full(n, model.outlier_rate)
    if model.outlier_mode == "discontinuity" and n > 1:
        with np.errstate(invalid="ignore"):
            step = np.abs(np.diff(true))
        disc = np.zeros(n, dtype=bool)
        jump = ~np.isfinite(step) | (step > DISCONTINUITY_STEP)
        disc[:-1] |= jump
        disc[1:] |= jump
        rate[disc] = np.minimum(1.0, rate[disc] * DISCONTINUITY_BOOST)
    outlier = hit & (coins < rate)

    ranges = np.where(hit, true + noise, np.inf)
    if outlier.any():
        lows = np.full(n, model.range_min)
        draws = rng.uniform(lows[outlier], np.maximum(true[outlier], model.range_min))
        ranges[outlier] = draws

    scan = LaserScan(
        angle_min=model.angle_min,
        angle_increment=model.angle_increment,
        ranges=ranges,
        range_min=model.range_min,
        range_max=model.range_max,
    )
    return scan, true


def run_scenario(world: World, script: TrajectoryScript, model: SensorModel,
                 rate: float = 10.0):
    """Sample poses along the script and emit (timestamp, scan, true pose) records.

    Scans are taken at a fixed rate from the script start to its end,
    inclusive of the start; a zero-duration script yields a single record.
    Returns a list of :class:`sdfslam.logio.ScanLogRecord`.
    """
    from .logio import ScanLogRecord

    duration = script.t_end - script.t_start
    count = int(math.floor(duration * rate + 1e-9)) + 1
    records = []
    for i in range(count):
        t = script.t_start + i / rate
        pose = script.pose_at(t)
        scan, _ = simulate_scan(world, pose, model, scan_index=i)
        scan.timestamp = t
        records.append(ScanLogRecord(timestamp=t, scan=scan, gt=pose, odom=None))
    return records


def rectangle_room(width: float = 10.0, height: float = 8.0):
    """Axis-aligned room walls centered on the origin."""
    hw, hh = 0.5 * width, 0.5 * height
    return [
        (-hw, -hh, hw, -hh),
        (hw, -hh, hw, hh),
        (hw, hh, -hw, hh),
        (-hw, hh, -hw, -hh),
    ]


def box_obstacle(cx: float, cy: float, size: float):
    """Square obstacle as four segments."""
    h = 0.5 * size
    return [
        (cx - h, cy - h, cx + h, cy - h),
        (cx + h, cy - h, cx + h, cy + h),
        (cx + h, cy + h, cx - h, cy + h),
        (cx - h, cy + h, cx - h, cy - h),
    ]


def rectangle_circuit(noise_sigma: float = 0.005, outlier_rate: float = 0.0,
                      seed: int = 7, scans: int = 400):
    """The standard benchmark scenario: a 10m x 8m room with two interior
    obstacles and a rounded-rectangle circuit driven over ``scans`` frames.

    Returns (world, script, model, rate).
    """
    segments = rectangle_room(10.0, 8.0)
    segments += box_obstacle(0.0, 1.5, 1.0)
    segments += box_obstacle(0.0, -1.5, 1.0)
    world = World(np.asarray(segments, dtype=np.float64))

    # Rounded-rectangle loop 1.3m inside the walls, heading along the path.
    x, y = 3.7, 2.7
    corner_pts = [(-x, -y), (x, -y), (x, y), (-x, y), (-x, -y)]
    rate = 10.0
    duration = (scans - 1) / rate
    legs = [math.hypot(bx - ax, by - ay)
            for (ax, ay), (bx, by) in zip(corner_pts, corner_pts[1:])]
    cum = [0.0]
    for leg in legs:
        cum.append(cum[-1] + leg)
    total = cum[-1]
    waypoints = []
    for k, ((ax, ay), (bx, by)) in enumerate(zip(corner_pts, corner_pts[1:])):
        heading = math.atan2(by - ay, bx - ax)
        waypoints.append((duration * cum[k] / total, Pose2(ax, ay, heading)))
    waypoints.append((duration, Pose2(*corner_pts[-1], waypoints[-1][1].theta)))
    script = TrajectoryScript(waypoints)

    model = SensorModel(noise_sigma=noise_sigma, outlier_rate=outlier_rate, seed=seed)
    return world, script, model, rate


def parse_scenario(path):
    """Load a scenario from a plain-text key-value file.

    Recognized keys (``key = value`` lines, ``#`` comments):

    - ``segment = x1 y1 x2 y2`` (repeatable) static wall
    - ``dynamic = x1 y1 x2 y2 first last`` (repeatable) scheduled wall
    - ``waypoint = t x y theta`` (repeatable) trajectory sample
    - ``rate``, ``beams``, ``fov_deg``, ``range_min``, ``range_max``,
      ``noise_sigma``, ``outlier_rate``, ``outlier_mode``, ``seed``

    Returns (world, script, model, rate).
    """
    segments = []
    dynamics = []
    waypoints = []
    scalars = {
        "rate": 10.0, "beams": 271, "fov_deg": 270.0, "range_min": 0.05,
        "range_max": 10.0, "noise_sigma": 0.0, "outlier_rate": 0.0,
        "outlier_mode": "discontinuity", "seed": 0,
    }
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            fields = value.split()
            try:
                if key == "segment":
                    segments.append(tuple(float(v) for v in fields))
                elif key == "dynamic":
                    seg = tuple(float(v) for v in fields[:4])
                    dynamics.append(DynamicSegment(seg, int(fields[4]), int(fields[5])))
                elif key == "waypoint":
                    t, x, y, theta = (float(v) for v in fields)
                    waypoints.append((t, Pose2(x, y, theta)))
                elif key in scalars:
                    kind = type(scalars[key])
                    scalars[key] = kind(value)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    if not segments:
        raise ValueError(f"{path}: scenario has no segments")
    if not waypoints:
        raise ValueError(f"{path}: scenario has no waypoints")
    world = World(np.asarray(segments, dtype=np.float64), dynamics)
    script = TrajectoryScript(sorted(waypoints, key=lambda w: w[0]))
    model = SensorModel(
        beam_count=int(scalars["beams"]),
        fov=math.radians(float(scalars["fov_deg"])),
        range_min=float(scalars["range_min"]),
        range_max=float(scalars["range_max"]),
        noise_sigma=float(scalars["noise_sigma"]),
        outlier_rate=float(scalars["outlier_rate"]),
        outlier_mode=str(scalars["outlier_mode"]),
        seed=int(scalars["seed"]),
    )
    return world, script, model, float(scalars["rate"])


def straight_wall_sweep(wall_x: float = 8.0, half_span: float = 4.0,
                        poses: int = 100, stand_off: float = 0.0):
    """A single long wall watched from a line of poses near the origin.

    Used for map-fidelity checks: the wall at ``x = wall_x`` spans
    ``y in [-half_span, half_span]``; the sensor slides along x = stand_off.
    Returns (world, list_of_poses).
    """
    world = World(np.asarray(
        [(wall_x, -half_span, wall_x, half_span)], dtype=np.float64))
    ys = np.linspace(-0.5, 0.5, poses)
    return world, [Pose2(stand_off, float(y), 0.0) for y in ys]

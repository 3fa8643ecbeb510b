"""Signed-distance-function mapping backend.

Each scan updates the map in five steps: hit points are bucketed per cell,
an orthogonal regression line is fitted per occupied cell (expanding the
point search over neighbor rings when the cell is sparse), nearby cell
centers are projected onto the line to produce candidate distance updates,
free space is carved along each beam, and the combined update set is
resolved by priority and fused into the grid with weighted running means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .geometry import GridGeometry, Pose2, scan_to_points, transform_points

# Beams hitting a surface near-parallel make the 1/cos term of the free-space
# extent blow up; beyond this incidence angle the beam carves nothing.
GAMMA_CLAMP = math.radians(80.0)

# Priority sentinel for free-space updates: strictly lower priority than any
# surface update (priorities are distances, smaller = higher), so a surface
# update always beats carving within one frame.
FREE_SPACE_PRIORITY = math.inf

DEGENERATE_EPS = 1e-9


class DegenerateFit(ValueError):
    """All points handed to the line fit coincide."""


class OutOfBounds(ValueError):
    """A hit point fell outside a fixed-size grid."""


class SdfCell(NamedTuple):
    F: float
    W: float


@dataclass(frozen=True)
class RegressionLine:
    """Orthogonal-fit line given as a point on it plus a unit normal."""

    point: tuple[float, float]
    normal: tuple[float, float]

    def __post_init__(self):
        n = math.hypot(*self.normal)
        if abs(n - 1.0) > 1e-12:
            raise ValueError("normal must be a unit vector")

    def signed_distance(self, p: tuple[float, float]) -> float:
        return self.normal[0] * (p[0] - self.point[0]) + self.normal[1] * (
            p[1] - self.point[1]
        )


@dataclass(frozen=True)
class UpdateEntry:
    """One candidate cell update produced while integrating a frame.

    ``priority`` is the distance between the updated cell's center and the
    cell that caused the update; smaller distance wins. Free-space entries
    use the infinite sentinel so any surface update beats them.
    """

    cell: tuple[int, int]
    f: float
    weight: float
    priority: float


@dataclass(frozen=True)
class ExpansionPolicy:
    """How many neighbor rings may be searched when a cell is sparse."""

    max_expansions: int

    def __post_init__(self):
        if self.max_expansions < 0:
            raise ValueError("max_expansions must be >= 0")

    @classmethod
    def for_resolution(cls, resolution: float) -> "ExpansionPolicy":
        """Default expansion budget by map resolution.

        Fine maps (<= 5cm) may expand three times, coarse maps (10-20cm)
        once; the 5-10cm band uses two.
        """
        if resolution <= 0.05:
            return cls(3)
        if resolution < 0.10:
            return cls(2)
        return cls(1)


@dataclass(eq=False)
class SdfGrid:
    """Dense grid of truncated signed distances F with confidence weights W.

    Arrays are float32, shape (height, width), indexed [row, col]. A cell
    with W = 0 was never updated; its F holds +truncation by convention so
    unknown space costs the same as observed free space.
    """

    geometry: GridGeometry
    truncation: float
    w_max: float
    F: np.ndarray
    W: np.ndarray

    @classmethod
    def unknown(cls, geometry: GridGeometry, truncation: float = 0.06,
                w_max: float = 10.0) -> "SdfGrid":
        shape = (geometry.height, geometry.width)
        return cls(
            geometry=geometry,
            truncation=truncation,
            w_max=w_max,
            F=np.full(shape, truncation, dtype=np.float32),
            W=np.zeros(shape, dtype=np.float32),
        )

    def cell(self, col: int, row: int) -> SdfCell:
        return SdfCell(float(self.F[row, col]), float(self.W[row, col]))

    def copy(self) -> "SdfGrid":
        return SdfGrid(self.geometry, self.truncation, self.w_max,
                       self.F.copy(), self.W.copy())


@dataclass
class UpdateStats:
    """Counts reported by one frame integration."""

    cells_updated: int = 0
    cells_skipped: int = 0
    cells_carved: int = 0


def fit_deming(points, laser_origin) -> RegressionLine:
    """Fit the line minimizing summed squared orthogonal distances.

    Orthogonal regression (error-variance ratio 1) handles vertical lines,
    which ordinary least squares cannot. The normal is oriented toward
    ``laser_origin`` so signed distances are positive on the sensor side.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    cx, cy = pts.mean(axis=0)
    dx = pts[:, 0] - cx
    dy = pts[:, 1] - cy
    if np.max(dx * dx + dy * dy) < DEGENERATE_EPS * DEGENERATE_EPS:
        raise DegenerateFit("all points coincide")
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    sxy = float(np.dot(dx, dy))
    angle = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    nx, ny = -math.sin(angle), math.cos(angle)
    if nx * (laser_origin[0] - cx) + ny * (laser_origin[1] - cy) < 0.0:
        nx, ny = -nx, -ny
    return RegressionLine(point=(cx, cy), normal=(nx, ny))


def chebyshev_ring(d: int) -> list[tuple[int, int]]:
    """Cell offsets at Chebyshev distance exactly ``d`` (8 for d=1, 16 for d=2, ...)."""
    if d == 0:
        return [(0, 0)]
    ring = []
    for dj in range(-d, d + 1):
        for di in range(-d, d + 1):
            if max(abs(di), abs(dj)) == d:
                ring.append((di, dj))
    return ring


def collect_points(cell, hits, policy: ExpansionPolicy):
    """Gather the points used to fit this cell's regression line.

    Starts with the cell's own bucket; while fewer than three points are on
    hand and the expansion budget allows, pulls in the next neighbor ring.
    Returns ``(points, expansions_used)``, or ``None`` when fewer than two
    points were found after maximum expansion (the update is given up).
    """
    points = list(hits.get(cell, ()))
    e = 0
    while len(points) < 3 and e < policy.max_expansions:
        e += 1
        for di, dj in chebyshev_ring(e):
            points.extend(hits.get((cell[0] + di, cell[1] + dj), ()))
    if len(points) < 2:
        return None
    return points, e


def update_range(cell_center, e: int, resolution: float):
    """Closed box around the causing cell limiting which projections update.

    Half-width grows with the expansion count: (1 + 0.5 * e) * resolution,
    so lines fitted from a wider search also update a wider range.
    """
    half = (1.0 + 0.5 * e) * resolution
    return (
        cell_center[0] - half,
        cell_center[1] - half,
        cell_center[0] + half,
        cell_center[1] + half,
    )


def surface_update_entries(cell, line: RegressionLine, e: int, grid: SdfGrid,
                           laser_origin) -> list[UpdateEntry]:
    """Candidate updates around one causing cell.

    Candidates are in-bounds cells whose center lies within the truncation
    distance of the causing cell's center. A candidate is updated only when
    its projection onto the regression line falls inside the closed
    :func:`update_range` box. The update value is the signed orthogonal
    distance to the line (positive on the sensor side, negative behind),
    clamped to the truncation band; its priority is the center distance to
    the causing cell.
    """
    geom = grid.geometry
    res = geom.resolution
    trunc = grid.truncation
    ccx, ccy = geom.cell_to_world(*cell)
    xmin, ymin, xmax, ymax = update_range((ccx, ccy), e, res)
    reach = int(math.ceil(trunc / res))
    limit = trunc * (1.0 + 1e-12)

    entries = []
    for dj in range(-reach, reach + 1):
        for di in range(-reach, reach + 1):
            dist = res * math.hypot(di, dj)
            if dist > limit:
                continue
            target = (cell[0] + di, cell[1] + dj)
            if not geom.contains(*target):
                continue
            tx, ty = geom.cell_to_world(*target)
            sd = line.signed_distance((tx, ty))
            px = tx - sd * line.normal[0]
            py = ty - sd * line.normal[1]
            if not (xmin <= px <= xmax and ymin <= py <= ymax):
                continue
            f_t = min(max(sd, -trunc), trunc)
            entries.append(UpdateEntry(target, f_t, 1.0, dist))
    return entries


def free_space_extent(beam_range: float, gamma: float, t_d: float,
                      gamma_clamp: float = GAMMA_CLAMP):
    """Carving distance along a beam, shortened by surface obliqueness.

    ``gamma`` is the incidence angle between the beam and the surface normal
    (0 when perpendicular). Carving stops t_d / cos(gamma) before the hit;
    past ``gamma_clamp`` the correction is unreliable and the beam carves
    nothing (returns None).
    """
    if abs(gamma) > gamma_clamp:
        return None
    return max(0.0, beam_range - t_d / math.cos(gamma))


def free_space_entry_cells(grid: SdfGrid, origin, direction, extent):
    """In-bounds cells carved by one beam: (cols, rows) arrays."""
    geom = grid.geometry
    return kernels.traverse_free(
        geom.origin_x, geom.origin_y, geom.resolution, geom.width, geom.height,
        origin[0], origin[1], direction[0], direction[1], extent,
    )


def free_space_entries(scan, pose: Pose2, grid: SdfGrid, extents) -> list[UpdateEntry]:
    """Free-space updates for a frame, one entry per visited cell per beam.

    ``extents`` is aligned with ``scan.ranges``; None entries carve nothing.
    Every visited cell is set toward +truncation with the free-space
    priority sentinel.
    """
    trunc = grid.truncation
    angles = scan.beam_angles()
    entries = []
    for i, extent in enumerate(extents):
        if extent is None or extent <= 0.0:
            continue
        a = pose.theta + angles[i]
        cols, rows = free_space_entry_cells(
            grid, (pose.x, pose.y), (math.cos(a), math.sin(a)), float(extent)
        )
        for c, r in zip(cols.tolist(), rows.tolist()):
            entries.append(UpdateEntry((c, r), trunc, 1.0, FREE_SPACE_PRIORITY))
    return entries


def resolve_update_set(entries) -> list[UpdateEntry]:
    """Reduce a frame's update set to at most one entry per cell.

    The highest-priority (smallest-distance) entry wins; exact ties are
    fused by the weighted-mean arithmetic of the cell fusion rule (all
    frame weights are 1, so ties average). The result does not depend on
    input order.
    """
    acc: dict[tuple[int, int], list[float]] = {}
    for en in entries:
        slot = acc.get(en.cell)
        if slot is None or en.priority < slot[0]:
            acc[en.cell] = [en.priority, en.f, 1.0]
        elif en.priority == slot[0]:
            slot[1] += en.f
            slot[2] += 1.0
    return [
        UpdateEntry(cell, fsum / count, 1.0, prio)
        for cell, (prio, fsum, count) in acc.items()
    ]


def fuse_cell(prev: SdfCell, f_t: float, w_t: float, w_max: float) -> SdfCell:
    """Weighted running mean of distance values with a capped weight.

    The first observation passes through unchanged. The mean always uses the
    stored weight, so a saturated cell keeps averaging at full confidence
    while its weight stays capped at ``w_max``.
    """
    if prev.W == 0.0:
        return SdfCell(f_t, min(w_t, w_max))
    f = (prev.W * prev.F + w_t * f_t) / (prev.W + w_t)
    w = min(prev.W + w_t, w_max)
    return SdfCell(f, w)


def _neighbor_line(lines, cell):
    """Line of the nearest fitted cell within one ring, if any.

    Used for beams whose own hit cell could not be fitted: the neighbor's
    normal still gives a usable incidence angle for free-space carving.
    Direct neighbors are preferred over diagonals.
    """
    line = lines.get(cell)
    if line is not None:
        return line
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
        line = lines.get((cell[0] + di, cell[1] + dj))
        if line is not None:
            return line
    return None


def integrate_scan(grid: SdfGrid, scan, pose: Pose2, policy: ExpansionPolicy,
                   clip: bool = False) -> UpdateStats:
    """Fuse one frame into the grid; mutates ``grid`` and returns counts.

    ``pose`` must be expressed in the grid frame. Hit points outside the
    grid raise :class:`OutOfBounds` unless ``clip`` is set, in which case
    they are dropped (their beams then carve nothing either, lacking a
    fitted line). Requires exclusive access to the grid.
    """
    stats = UpdateStats()
    geom = grid.geometry
    trunc = grid.truncation

    pts_sensor = scan_to_points(scan)
    if len(pts_sensor) == 0:
        return stats
    pts_world = transform_points(pose, pts_sensor)
    cols, rows = geom.world_to_cells(pts_world)
    inb = (cols >= 0) & (cols < geom.width) & (rows >= 0) & (rows < geom.height)
    if not clip and not inb.all():
        raise OutOfBounds("hit point outside grid (grid growth is not supported)")

    origin = (pose.x, pose.y)
    hits: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for k in np.flatnonzero(inb):
        cell = (int(cols[k]), int(rows[k]))
        hits.setdefault(cell, []).append((pts_world[k, 0], pts_world[k, 1]))

    # Surface updates: fit one regression line per occupied cell.
    lines: dict[tuple[int, int], RegressionLine] = {}
    entries: list[UpdateEntry] = []
    for cell in hits:
        collected = collect_points(cell, hits, policy)
        if collected is None:
            stats.cells_skipped += 1
            continue
        pts, e = collected
        try:
            line = fit_deming(pts, origin)
        except DegenerateFit:
            stats.cells_skipped += 1
            continue
        lines[cell] = line
        entries.extend(surface_update_entries(cell, line, e, grid, origin))
    resolved = resolve_update_set(entries)

    # Free-space carving along every valid beam that has a usable line.
    valid_idx = np.flatnonzero(scan.valid_mask())
    angles = scan.beam_angles()
    free_cols: list[np.ndarray] = []
    free_rows: list[np.ndarray] = []
    for k in range(len(pts_sensor)):
        cell = geom.world_to_cell(pts_world[k, 0], pts_world[k, 1])
        line = _neighbor_line(lines, cell)
        if line is None:
            continue
        beam = scan.ranges[valid_idx[k]]
        a = pose.theta + angles[valid_idx[k]]
        ux, uy = math.cos(a), math.sin(a)
        cosg = -(ux * line.normal[0] + uy * line.normal[1])
        gamma = math.acos(min(max(cosg, -1.0), 1.0))
        extent = free_space_extent(beam, gamma, trunc)
        if extent is None or extent <= 0.0:
            continue
        fc, fr = free_space_entry_cells(grid, origin, (ux, uy), extent)
        if len(fc):
            free_cols.append(fc)
            free_rows.append(fr)

    # Apply surface winners, then carve the remaining free cells. Surface
    # entries always outrank the free-space sentinel, so cells present in
    # both sets take the surface value only.
    surf_cols = np.array([en.cell[0] for en in resolved], dtype=np.int64)
    surf_rows = np.array([en.cell[1] for en in resolved], dtype=np.int64)
    surf_f = np.array([en.f for en in resolved], dtype=np.float64)
    _fuse_batch(grid, surf_cols, surf_rows, surf_f)
    stats.cells_updated = len(resolved)

    if free_cols:
        fc = np.concatenate(free_cols)
        fr = np.concatenate(free_rows)
        flat = np.unique(fr * geom.width + fc)
        if len(surf_cols):
            surf_flat = surf_rows * geom.width + surf_cols
            flat = np.setdiff1d(flat, surf_flat, assume_unique=False)
        fcol = flat % geom.width
        frow = flat // geom.width
        _fuse_batch(grid, fcol, frow, np.full(len(flat), trunc, dtype=np.float64))
        stats.cells_carved = len(flat)
    return stats


def _fuse_batch(grid: SdfGrid, cols, rows, f_t, w_t: float = 1.0):
    """Vectorized fuse of distinct cells; same arithmetic as fuse_cell."""
    if len(cols) == 0:
        return
    wp = grid.W[rows, cols].astype(np.float64)
    fp = grid.F[rows, cols].astype(np.float64)
    first = wp == 0.0
    f_new = np.where(first, f_t, (wp * fp + w_t * f_t) / (wp + w_t))
    w_new = np.minimum(wp + w_t, grid.w_max)
    grid.F[rows, cols] = f_new.astype(np.float32)
    grid.W[rows, cols] = w_new.astype(np.float32)

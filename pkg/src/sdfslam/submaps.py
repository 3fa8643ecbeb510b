"""Submap lifecycle, merging into one integrated map, and pure localization.

During SLAM, scans are inserted into a staggered window of at most two
unfinished submaps; matching targets the older one so the target is always
well populated. Finished submaps are later merged into a single grid by
resampling each submap at the merged cell centers (bicubic) and fusing with
weighted means, taking the maximum weight. Pure localization registers scans
against the merged grid without ever mutating it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GridGeometry, Pose2, compose, inverse
from .mapping import ExpansionPolicy, SdfGrid, integrate_scan
from .matching import MatchConfig, MatchResult, match_two_stage
from . import kernels


class MixedResolution(ValueError):
    """Submaps disagree on grid resolution and cannot be merged."""


@dataclass(eq=False)
class Submap:
    """One fixed-size grid anchored in the global frame.

    ``pose`` maps submap-frame coordinates to the global frame. Once
    ``finished`` is set the grid is immutable.
    """

    grid: SdfGrid
    pose: Pose2
    id: int
    scan_count: int = 0
    finished: bool = False

    def insert(self, scan, world_pose: Pose2, policy: ExpansionPolicy):
        if self.finished:
            raise ValueError("cannot insert into a finished submap")
        local = compose(inverse(self.pose), world_pose)
        integrate_scan(self.grid, scan, local, policy, clip=True)
        self.scan_count += 1


def _centered_grid(cells: int, resolution: float, truncation: float,
                   w_max: float) -> SdfGrid:
    half = 0.5 * (cells - 1) * resolution
    geom = GridGeometry(-half, -half, resolution, cells, cells)
    return SdfGrid.unknown(geom, truncation, w_max)


@dataclass(eq=False)
class SubmapCollection:
    """Staggered two-deep window of submaps under construction.

    A new submap is anchored at the current pose once the newest one has
    received half its budget, and a submap is finished when it reaches
    ``scans_per_submap`` scans; every scan therefore lands in one or two
    submaps and the matching target always carries at least half a budget
    of data.
    """

    scans_per_submap: int = 50
    cells: int = 100
    resolution: float = 0.05
    truncation: float = 0.06
    w_max: float = 10.0
    submaps: list[Submap] = field(default_factory=list)

    def unfinished(self) -> list[Submap]:
        return [s for s in self.submaps if not s.finished]

    def matching_target(self) -> Submap | None:
        """The older unfinished submap with data, if any."""
        for s in self.submaps:
            if not s.finished and s.scan_count > 0:
                return s
        return None

    def _spawn(self, anchor: Pose2):
        grid = _centered_grid(self.cells, self.resolution, self.truncation,
                              self.w_max)
        self.submaps.append(Submap(grid=grid, pose=anchor, id=len(self.submaps)))

    def add_scan(self, scan, world_pose: Pose2, policy: ExpansionPolicy):
        """Insert a matched scan into every unfinished submap and roll the window."""
        if not self.submaps:
            self._spawn(world_pose)
        for sm in self.unfinished():
            sm.insert(scan, world_pose, policy)

        active = self.unfinished()
        if active and active[0].scan_count >= self.scans_per_submap:
            active[0].finished = True
            active = active[1:]
        if not active or active[-1].scan_count == math.ceil(self.scans_per_submap / 2):
            self._spawn(world_pose)

    def finish_all(self):
        for sm in self.submaps:
            sm.finished = True
        # Drop trailing submaps that never received data.
        self.submaps = [s for s in self.submaps if s.scan_count > 0]


@dataclass(eq=False)
class MergedMap:
    """One integrated grid covering every submap, plus its provenance."""

    grid: SdfGrid
    provenance: list[int]


def merged_bounds(submaps) -> GridGeometry:
    """Geometry covering the transformed corners of all submaps.

    Each submap's four corners go through its pose into the global frame;
    the result covers their bounding box padded by one cell, at the common
    resolution.
    """
    if not submaps:
        raise ValueError("need at least one submap")
    res = submaps[0].grid.geometry.resolution
    for sm in submaps:
        if sm.grid.geometry.resolution != res:
            raise MixedResolution("submaps disagree on resolution")

    xs, ys = [], []
    for sm in submaps:
        for corner in sm.grid.geometry.corners():
            c, s = math.cos(sm.pose.theta), math.sin(sm.pose.theta)
            xs.append(sm.pose.x + c * corner[0] - s * corner[1])
            ys.append(sm.pose.y + s * corner[0] + c * corner[1])

    x0, x1 = min(xs) - res, max(xs) + res
    y0, y1 = min(ys) - res, max(ys) + res
    width = int(math.ceil((x1 - x0) / res - 1e-9))
    height = int(math.ceil((y1 - y0) / res - 1e-9))
    return GridGeometry(x0 + 0.5 * res, y0 + 0.5 * res, res, width, height)


def sample_bicubic(grid: SdfGrid, p):
    """Distance and weight of a submap at an off-center point.

    Catmull-Rom bicubic over the 4x4 neighborhood of F (boundary rows/cols
    clamped, result clamped to the truncation band) and bilinear over W.
    Returns (F, W), or None when the point lacks a full one-cell margin of
    known support.
    """
    geom = grid.geometry
    f, w, valid = kernels.bicubic_fw(
        grid.F, grid.W, geom.origin_x, geom.origin_y, geom.resolution,
        grid.truncation, np.asarray([p], dtype=np.float64),
    )
    if not valid[0]:
        return None
    return float(f[0]), float(w[0])


def merge_submaps(submaps) -> MergedMap:
    """Fuse finished submaps into one integrated map.

    Submaps are folded in id order. For every merged cell inside a submap's
    transformed footprint, the submap is resampled at the corresponding
    point; the distance values fuse by weighted mean and the weight becomes
    the maximum of the two. Samples without known support are skipped so
    unknown regions never dilute another submap's surface.
    """
    submaps = sorted(submaps, key=lambda s: s.id)
    for sm in submaps:
        if not sm.finished:
            raise ValueError(f"submap {sm.id} is not finished")
    geom = merged_bounds(submaps)
    first = submaps[0].grid
    merged = SdfGrid.unknown(geom, first.truncation, first.w_max)

    for sm in submaps:
        sgeom = sm.grid.geometry
        # Bounding box of the submap footprint in merged-cell indices.
        c, s = math.cos(sm.pose.theta), math.sin(sm.pose.theta)
        cx = [sm.pose.x + c * px - s * py for px, py in sgeom.corners()]
        cy = [sm.pose.y + s * px + c * py for px, py in sgeom.corners()]
        col0, row0 = geom.world_to_cell(min(cx), min(cy))
        col1, row1 = geom.world_to_cell(max(cx), max(cy))
        col0, col1 = max(col0, 0), min(col1, geom.width - 1)
        row0, row1 = max(row0, 0), min(row1, geom.height - 1)
        if col0 > col1 or row0 > row1:
            continue

        cols, rows = np.meshgrid(np.arange(col0, col1 + 1),
                                 np.arange(row0, row1 + 1))
        cols = cols.ravel()
        rows = rows.ravel()
        centers = geom.cells_to_world(cols, rows)
        inv = inverse(sm.pose)
        ci, si = math.cos(inv.theta), math.sin(inv.theta)
        local = np.empty_like(centers)
        local[:, 0] = inv.x + ci * centers[:, 0] - si * centers[:, 1]
        local[:, 1] = inv.y + si * centers[:, 0] + ci * centers[:, 1]

        fb, wb, valid = kernels.bicubic_fw(
            sm.grid.F, sm.grid.W, sgeom.origin_x, sgeom.origin_y,
            sgeom.resolution, sm.grid.truncation, local,
        )
        if not valid.any():
            continue
        vc, vr = cols[valid], rows[valid]
        fb, wb = fb[valid], wb[valid]
        fm = merged.F[vr, vc].astype(np.float64)
        wm = merged.W[vr, vc].astype(np.float64)
        fused = np.where(wm == 0.0, fb, (wm * fm + wb * fb) / (wm + wb))
        merged.F[vr, vc] = fused.astype(np.float32)
        merged.W[vr, vc] = np.maximum(wm, wb).astype(np.float32)

    return MergedMap(grid=merged, provenance=[sm.id for sm in submaps])


def pure_localize(merged: MergedMap, scan, init: Pose2, iters: int = 5,
                  cfg: MatchConfig | None = None) -> MatchResult:
    """Register a scan against the merged map; never mutates it.

    Both optimization stages are capped at ``iters`` iterations; a handful
    suffices because the map is fixed and the initial pose is close.
    """
    if cfg is None:
        cfg = MatchConfig.for_grid(merged.grid, max_iters_stage1=iters,
                                   max_iters_stage2=iters)
    return match_two_stage(merged.grid, scan, init, cfg)

import math

import numpy as np
import pytest

from sdfslam.geometry import GridGeometry, Pose2, scan_to_points, transform_points
from sdfslam.mapping import (
    FREE_SPACE_PRIORITY,
    DegenerateFit,
    ExpansionPolicy,
    OutOfBounds,
    RegressionLine,
    SdfCell,
    SdfGrid,
    UpdateEntry,
    chebyshev_ring,
    collect_points,
    fit_deming,
    free_space_entries,
    free_space_extent,
    fuse_cell,
    integrate_scan,
    resolve_update_set,
    surface_update_entries,
    update_range,
)
from sdfslam.simulate import SensorModel, World, simulate_scan, straight_wall_sweep

from conftest import make_grid


def brute_force_line_angle(pts: np.ndarray) -> float:
    """Scan 1e5 direction angles, return the SSE-minimizing line direction."""
    c = pts.mean(axis=0)
    d = pts - c
    angles = np.linspace(0.0, math.pi, 100_000, endpoint=False)
    normals = np.column_stack((-np.sin(angles), np.cos(angles)))
    sse = (d @ normals.T) ** 2
    return float(angles[np.argmin(sse.sum(axis=0))])


class TestDeming:
    def test_horizontal_exact(self):
        line = fit_deming([(0, 0), (1, 0), (2, 0)], laser_origin=(1.0, 5.0))
        assert line.point == pytest.approx((1.0, 0.0))
        assert line.normal == pytest.approx((0.0, 1.0))

    def test_vertical_no_failure(self):
        line = fit_deming([(0, 0), (0, 1), (0, 2)], laser_origin=(-1.0, 1.0))
        assert line.normal == pytest.approx((-1.0, 0.0))

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateFit):
            fit_deming([(1.0, 1.0), (1.0, 1.0), (1.0 + 1e-12, 1.0)], (0, 0))

    def test_two_points_allowed(self):
        line = fit_deming([(0, 0), (1, 1)], laser_origin=(0.0, 5.0))
        expect = 1.0 / math.sqrt(2.0)
        assert line.normal == pytest.approx((-expect, expect))

    def test_noisy_recovery_matches_angle_grid_oracle(self):
        rng = np.random.default_rng(30)
        for _ in range(5):
            angle = rng.uniform(0, math.pi)
            dx, dy = math.cos(angle), math.sin(angle)
            t = rng.uniform(-1, 1, 50)
            noise = rng.normal(0, 0.01, 50)
            pts = np.column_stack((
                0.5 + t * dx - noise * dy,
                -0.2 + t * dy + noise * dx,
            ))
            line = fit_deming(pts, laser_origin=(0.5 - 10 * dy, -0.2 + 10 * dx))
            got = math.atan2(-line.normal[0], line.normal[1]) % math.pi
            expect = brute_force_line_angle(pts)
            diff = abs(got - expect)
            diff = min(diff, math.pi - diff)
            assert diff < 1e-3

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(31)
        t = rng.uniform(-1, 1, 40)
        pts = np.column_stack((t, 0.3 * t + rng.normal(0, 0.02, 40)))
        origin = (0.0, 5.0)
        base = fit_deming(pts, origin)
        for ang in rng.uniform(-math.pi, math.pi, 20):
            c, s = math.cos(ang), math.sin(ang)
            R = np.array([[c, -s], [s, c]])
            rline = fit_deming(pts @ R.T, (R @ origin))
            expect = R @ np.asarray(base.normal)
            dot = float(np.dot(rline.normal, expect))
            assert abs(dot) > 1.0 - 1e-9
            assert dot > 0  # orientation also rotates

    def test_normal_faces_sensor(self):
        rng = np.random.default_rng(32)
        for _ in range(50):
            t = rng.uniform(-1, 1, 10)
            pts = np.column_stack((t, rng.normal(0, 0.01, 10)))
            origin = tuple(rng.uniform(-3, 3, 2))
            line = fit_deming(pts, origin)
            vx = origin[0] - line.point[0]
            vy = origin[1] - line.point[1]
            assert line.normal[0] * vx + line.normal[1] * vy >= 0.0


class TestCollectPoints:
    def test_enough_points_no_expansion(self):
        hits = {(5, 5): [(0, 0), (0.01, 0), (0.02, 0)]}
        pts, e = collect_points((5, 5), hits, ExpansionPolicy(3))
        assert len(pts) == 3 and e == 0

    def test_two_ring_expansion(self):
        # One point in the cell, one in ring 1, two in ring 2: four points
        # after two expansions.
        hits = {
            (5, 5): [(0.0, 0.0)],
            (6, 5): [(0.05, 0.0)],
            (7, 5): [(0.10, 0.0)],
            (7, 7): [(0.10, 0.10)],
        }
        pts, e = collect_points((5, 5), hits, ExpansionPolicy(3))
        assert len(pts) == 4 and e == 2

    def test_gives_up_below_two_points(self):
        hits = {(5, 5): [(0.0, 0.0)]}
        assert collect_points((5, 5), hits, ExpansionPolicy(3)) is None

    def test_two_points_at_max_expansion_accepted(self):
        hits = {(5, 5): [(0.0, 0.0)], (6, 6): [(0.05, 0.05)]}
        pts, e = collect_points((5, 5), hits, ExpansionPolicy(1))
        assert len(pts) == 2 and e == 1

    def test_ring_sizes(self):
        assert len(chebyshev_ring(1)) == 8
        assert len(chebyshev_ring(2)) == 16
        assert len(chebyshev_ring(3)) == 24


class TestUpdateRange:
    def test_no_expansion_half_width(self):
        xmin, ymin, xmax, ymax = update_range((1.0, 2.0), 0, 0.05)
        assert (xmax - xmin) == pytest.approx(0.1)
        assert (ymax - ymin) == pytest.approx(0.1)

    def test_two_expansions_doubles(self):
        xmin, _, xmax, _ = update_range((0.0, 0.0), 2, 0.05)
        assert xmax == pytest.approx(0.1)

    def test_boundary_is_closed(self):
        xmin, ymin, xmax, ymax = update_range((0.0, 0.0), 0, 0.05)
        assert xmin <= -0.05 <= xmax and ymin <= 0.0 <= ymax


class TestSurfaceEntries:
    def setup_method(self):
        self.grid = make_grid(half=0.5, res=0.05, trunc=0.06)

    def test_center_on_line_zero(self):
        cell = self.grid.geometry.world_to_cell(0.0, 0.0)
        cx, cy = self.grid.geometry.cell_to_world(*cell)
        line = RegressionLine((cx, cy), (0.0, 1.0))
        entries = surface_update_entries(cell, line, 0, self.grid, (cx, 5.0))
        own = [en for en in entries if en.cell == cell]
        assert own and own[0].f == pytest.approx(0.0)
        assert own[0].priority == 0.0

    def test_sensor_side_positive(self):
        cell = self.grid.geometry.world_to_cell(0.0, 0.0)
        cx, cy = self.grid.geometry.cell_to_world(*cell)
        # Wall 2cm below the candidate center; sensor above.
        line = RegressionLine((cx, cy - 0.02), (0.0, 1.0))
        entries = surface_update_entries(cell, line, 0, self.grid, (cx, 5.0))
        own = [en for en in entries if en.cell == cell][0]
        assert own.f == pytest.approx(0.02)

    def test_behind_clamped(self):
        # Wall 4cm above the causing cell center; the candidate one row
        # below sits 9cm behind the surface and clamps to -truncation.
        cell = self.grid.geometry.world_to_cell(0.0, 0.0)
        cx, cy = self.grid.geometry.cell_to_world(*cell)
        line = RegressionLine((cx, cy + 0.04), (0.0, 1.0))
        entries = surface_update_entries(cell, line, 0, self.grid, (cx, 5.0))
        below = [en for en in entries if en.cell == (cell[0], cell[1] - 1)][0]
        assert below.f == pytest.approx(-0.06)

    def test_candidates_limited_by_truncation_circle(self):
        cell = self.grid.geometry.world_to_cell(0.0, 0.0)
        cx, cy = self.grid.geometry.cell_to_world(*cell)
        line = RegressionLine((cx, cy), (0.0, 1.0))
        # A long update box cannot defeat the truncation-radius circle.
        entries = surface_update_entries(cell, line, 6, self.grid, (cx, 5.0))
        for en in entries:
            tx, ty = self.grid.geometry.cell_to_world(*en.cell)
            assert math.hypot(tx - cx, ty - cy) <= 0.06 + 1e-9

    def test_projection_box_filters(self):
        cell = self.grid.geometry.world_to_cell(0.0, 0.0)
        cx, cy = self.grid.geometry.cell_to_world(*cell)
        line = RegressionLine((cx, cy), (0.0, 1.0))
        entries = surface_update_entries(cell, line, 0, self.grid, (cx, 5.0))
        # e=0 box has half-width one cell: columns beyond +-1 are excluded
        # even though the row neighbors at distance one cell are in range.
        cols = {en.cell[0] - cell[0] for en in entries}
        assert cols == {-1, 0, 1}


class TestFreeSpaceExtent:
    def test_perpendicular(self):
        assert free_space_extent(5.0, 0.0, 0.06) == pytest.approx(4.94)

    def test_sixty_degrees(self):
        assert free_space_extent(5.0, math.pi / 3, 0.06) == pytest.approx(4.88)

    def test_clamp_returns_none(self):
        assert free_space_extent(5.0, math.radians(85), 0.06,
                                 gamma_clamp=math.radians(80)) is None

    def test_floor_at_zero(self):
        assert free_space_extent(0.03, 0.0, 0.06) == 0.0


class TestFreeSpaceEntries:
    def test_axis_aligned_19_cells(self):
        grid = make_grid(half=2.5, res=0.05)
        scan_like = _single_beam_scan(1.0)
        entries = free_space_entries(scan_like, Pose2(0, 0, 0), grid, [0.94])
        assert len(entries) == 19
        assert all(en.f == grid.truncation for en in entries)
        assert all(en.priority == FREE_SPACE_PRIORITY for en in entries)

    def test_short_beam_empty(self):
        grid = make_grid(half=2.5, res=0.05)
        entries = free_space_entries(_single_beam_scan(0.03), Pose2(0, 0, 0),
                                     grid, [0.0])
        assert entries == []

    def test_none_extent_skipped(self):
        grid = make_grid(half=2.5, res=0.05)
        entries = free_space_entries(_single_beam_scan(1.0), Pose2(0, 0, 0),
                                     grid, [None])
        assert entries == []


def _single_beam_scan(r):
    from sdfslam.geometry import LaserScan

    return LaserScan(0.0, 0.1, [r], 0.01, 10.0)


class TestResolve:
    def test_higher_priority_wins(self):
        entries = [
            UpdateEntry((1, 1), 0.01, 1.0, 0.05),
            UpdateEntry((1, 1), 0.04, 1.0, 0.03),
        ]
        out = resolve_update_set(entries)
        assert len(out) == 1
        assert out[0].f == 0.04 and out[0].priority == 0.03

    def test_equal_priority_fuses(self):
        entries = [
            UpdateEntry((2, 2), 0.02, 1.0, 0.05),
            UpdateEntry((2, 2), 0.04, 1.0, 0.05),
        ]
        out = resolve_update_set(entries)
        assert len(out) == 1
        assert out[0].f == pytest.approx(0.03)
        assert out[0].weight == 1.0

    def test_surface_beats_free(self):
        entries = [
            UpdateEntry((3, 3), 0.06, 1.0, FREE_SPACE_PRIORITY),
            UpdateEntry((3, 3), -0.01, 1.0, 0.10),
        ]
        out = resolve_update_set(entries)
        assert out[0].f == -0.01

    def test_order_independent(self):
        rng = np.random.default_rng(33)
        entries = []
        for _ in range(200):
            cell = (int(rng.integers(0, 5)), int(rng.integers(0, 5)))
            prio = float(rng.choice([0.0, 0.05, 0.1, FREE_SPACE_PRIORITY]))
            entries.append(UpdateEntry(cell, float(rng.uniform(-0.06, 0.06)), 1.0, prio))
        base = {en.cell: en for en in resolve_update_set(entries)}
        for seed in range(5):
            rng2 = np.random.default_rng(seed)
            shuffled = list(entries)
            rng2.shuffle(shuffled)
            got = {en.cell: en for en in resolve_update_set(shuffled)}
            assert got.keys() == base.keys()
            for cell in base:
                assert got[cell].f == pytest.approx(base[cell].f, abs=1e-15)
                assert got[cell].priority == base[cell].priority


class TestFuseCell:
    def test_first_observation_passthrough(self):
        assert fuse_cell(SdfCell(0.06, 0.0), 0.03, 1.0, 10.0) == (0.03, 1.0)

    def test_saturated_weight_stays_capped(self):
        out = fuse_cell(SdfCell(0.02, 10.0), 0.02, 1.0, 10.0)
        assert out.F == pytest.approx(0.02)
        assert out.W == 10.0

    def test_equal_weight_mean(self):
        out = fuse_cell(SdfCell(0.0, 1.0), 0.06, 1.0, 10.0)
        assert out.F == pytest.approx(0.03)
        assert out.W == 2.0

    def test_commutative_below_cap(self):
        rng = np.random.default_rng(34)
        for _ in range(500):
            a, b = rng.uniform(-0.06, 0.06, 2)
            ab = fuse_cell(fuse_cell(SdfCell(0.06, 0.0), a, 1.0, 10.0), b, 1.0, 10.0)
            ba = fuse_cell(fuse_cell(SdfCell(0.06, 0.0), b, 1.0, 10.0), a, 1.0, 10.0)
            assert ab.F == ba.F  # exact: float addition commutes
            assert ab.W == ba.W


class TestIntegrateScan:
    def test_empty_scan_unchanged(self):
        from sdfslam.geometry import LaserScan

        grid = make_grid()
        before = (grid.F.copy(), grid.W.copy())
        scan = LaserScan(0.0, 0.01, [np.nan] * 100, 0.05, 10.0)
        stats = integrate_scan(grid, scan, Pose2(0, 0, 0), ExpansionPolicy(3))
        assert np.array_equal(grid.F, before[0])
        assert np.array_equal(grid.W, before[1])
        assert stats.cells_updated == 0

    def test_out_of_bounds_raises_without_clip(self):
        grid = make_grid(half=0.5)
        scan = _single_beam_scan(3.0)
        with pytest.raises(OutOfBounds):
            integrate_scan(grid, scan, Pose2(0, 0, 0), ExpansionPolicy(3))
        integrate_scan(grid, scan, Pose2(0, 0, 0), ExpansionPolicy(3), clip=True)

    def test_invariants_after_many_scans(self, room_map):
        assert np.all(np.abs(room_map.F) <= room_map.truncation + 1e-6)
        assert np.all(room_map.W >= 0.0)
        assert np.all(room_map.W <= room_map.w_max)

    def test_free_space_never_negative(self):
        grid = make_grid(half=2.5)
        world = World(np.array([[2.0, -2.0, 2.0, 2.0]]))
        model = SensorModel(seed=1)
        scan, _ = simulate_scan(world, Pose2(0, 0, 0), model)
        integrate_scan(grid, scan, Pose2(0, 0, 0), ExpansionPolicy(3), clip=True)
        carved = (grid.W > 0) & (grid.F.astype(np.float64) >= grid.truncation * 0.999)
        assert carved.any()
        assert np.all(grid.F[grid.W > 0] >= -grid.truncation - 1e-6)

    def test_straight_wall_band_accuracy(self):
        # Noise-free wall watched from 100 poses: every updated band cell
        # carries the true signed distance to within half a cell.
        world, poses = straight_wall_sweep(wall_x=2.0, half_span=2.0, poses=100)
        grid = make_grid(half=2.5, res=0.05, trunc=0.06)
        model = SensorModel(seed=5)
        policy = ExpansionPolicy.for_resolution(0.05)
        for i, pose in enumerate(poses):
            scan, _ = simulate_scan(world, pose, model, scan_index=i)
            integrate_scan(grid, scan, pose, policy, clip=True)

        geom = grid.geometry
        res = geom.resolution
        checked = 0
        for row in range(geom.height):
            for col in range(geom.width):
                cx, cy = geom.cell_to_world(col, row)
                if abs(cy) > 1.5:  # stay clear of the wall ends
                    continue
                true_sd = 2.0 - cx  # sensor side is x < 2
                if abs(true_sd) > grid.truncation:
                    continue
                if grid.W[row, col] == 0.0:
                    continue
                assert abs(float(grid.F[row, col]) - true_sd) <= res / 2, (col, row)
                checked += 1
        assert checked > 100

    def test_expansion_updates_more_far_cells(self):
        # Sparse far-wall hits: expansion densifies the updated band.
        world, poses = straight_wall_sweep(wall_x=8.0, half_span=4.0, poses=60)
        model = SensorModel(seed=6)

        def build(max_exp):
            grid = make_grid(half=9.0, res=0.05, trunc=0.06)
            for i, pose in enumerate(poses):
                scan, _ = simulate_scan(world, pose, model, scan_index=i)
                integrate_scan(grid, scan, pose, ExpansionPolicy(max_exp), clip=True)
            return grid

        on = build(3)
        off = build(0)

        def band_count(grid):
            geom = grid.geometry
            cols, rows = np.meshgrid(np.arange(geom.width), np.arange(geom.height))
            cx = geom.origin_x + cols * geom.resolution
            cy = geom.origin_y + rows * geom.resolution
            band = (np.abs(8.0 - cx) <= grid.truncation) & (np.abs(cy) <= 3.5)
            surface = (grid.W > 0) & (grid.F.astype(np.float64) < grid.truncation * 0.999)
            return int(np.count_nonzero(band & surface))

        assert band_count(on) > band_count(off)

    def test_expansion_inactive_when_cells_dense(self):
        # With three or more points in every occupied cell the expansion
        # budget changes nothing.
        rng = np.random.default_rng(35)
        from sdfslam.geometry import LaserScan

        xs = np.repeat(np.arange(0.5, 1.5, 0.05), 4) + rng.uniform(-0.02, 0.02, 80)
        pts = np.column_stack((xs, np.full(80, 1.0)))
        r = np.hypot(pts[:, 0], pts[:, 1])
        a = np.arctan2(pts[:, 1], pts[:, 0])
        order = np.argsort(a)
        scan = LaserScan(float(a[order][0]), 1e-9, r[order], 0.01, 10.0)
        scan.beam_angles = lambda: a[order]  # irregular angles for this test

        g_on = make_grid(half=2.5)
        g_off = make_grid(half=2.5)
        integrate_scan(g_on, scan, Pose2(0, 0, 0), ExpansionPolicy(3), clip=True)
        integrate_scan(g_off, scan, Pose2(0, 0, 0), ExpansionPolicy(0), clip=True)
        assert np.array_equal(g_on.F, g_off.F)
        assert np.array_equal(g_on.W, g_off.W)

    def test_matches_operation_composition(self):
        # The fused fast path must equal the literal pipeline: collect, fit,
        # project, carve, resolve, fuse.
        world = World(np.array([[1.5, -2.0, 1.5, 2.0], [-2.0, 1.8, 2.0, 1.8]]))
        model = SensorModel(noise_sigma=0.003, seed=8)
        pose = Pose2(0.1, -0.2, 0.3)
        scan, _ = simulate_scan(world, pose, model)

        fast = make_grid(half=2.5)
        integrate_scan(fast, scan, pose, ExpansionPolicy(3), clip=True)

        slow = make_grid(half=2.5)
        _integrate_by_ops(slow, scan, pose, ExpansionPolicy(3))

        assert np.array_equal(fast.F, slow.F)
        assert np.array_equal(fast.W, slow.W)


def _integrate_by_ops(grid, scan, pose, policy):
    """Literal composition of the public operations, for equivalence checks."""
    from sdfslam.mapping import _neighbor_line

    geom = grid.geometry
    pts = scan_to_points(scan)
    world_pts = transform_points(pose, pts)
    cols, rows = geom.world_to_cells(world_pts)
    inb = (cols >= 0) & (cols < geom.width) & (rows >= 0) & (rows < geom.height)

    hits = {}
    for k in np.flatnonzero(inb):
        hits.setdefault((int(cols[k]), int(rows[k])), []).append(
            (world_pts[k, 0], world_pts[k, 1]))

    origin = (pose.x, pose.y)
    lines = {}
    entries = []
    for cell in hits:
        res = collect_points(cell, hits, policy)
        if res is None:
            continue
        cell_pts, e = res
        try:
            line = fit_deming(cell_pts, origin)
        except DegenerateFit:
            continue
        lines[cell] = line
        entries.extend(surface_update_entries(cell, line, e, grid, origin))

    valid_idx = np.flatnonzero(scan.valid_mask())
    angles = scan.beam_angles()
    extents = [None] * len(scan.ranges)
    for k in range(len(pts)):
        cell = geom.world_to_cell(world_pts[k, 0], world_pts[k, 1])
        line = _neighbor_line(lines, cell)
        if line is None:
            continue
        beam_index = valid_idx[k]
        a = pose.theta + angles[beam_index]
        cosg = -(math.cos(a) * line.normal[0] + math.sin(a) * line.normal[1])
        gamma = math.acos(min(max(cosg, -1.0), 1.0))
        extents[beam_index] = free_space_extent(scan.ranges[beam_index], gamma,
                                                grid.truncation)

    entries.extend(free_space_entries(scan, pose, grid, extents))
    for en in resolve_update_set(entries):
        col, row = en.cell
        cell = fuse_cell(grid.cell(col, row), en.f, en.weight, grid.w_max)
        grid.F[row, col] = np.float32(cell.F)
        grid.W[row, col] = np.float32(cell.W)

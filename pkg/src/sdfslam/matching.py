"""Pose estimation against an SDF grid.

The cost of a pose is the robustified sum over scan points of the sampled
weighted distance W*F at each transformed point. Minimization uses
Gauss-Newton with Huber reweighting (IRLS); a second stage re-runs the
optimization after trimming the points whose distance value lies outside the
truncation band, which removes most range outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Pose2, normalize_angle, scan_to_points
from .mapping import SdfGrid

_EIG_RATIO_MIN = 1e-10
_DAMPING = 1e-6


class SingularHessian(RuntimeError):
    """The normal matrix is rank-deficient beyond damping (pose unobservable)."""


class TooFewPoints(RuntimeError):
    """Not enough points survived trimming for a reliable pose."""


@dataclass(frozen=True)
class MatchConfig:
    """Optimizer settings.

    The trim threshold defaults to the map truncation distance (6cm, the
    systematic error class of the supported scanners). The Huber delta is in
    weighted-meters units; one third of the saturated band keeps well-matched
    points in the quadratic region.
    """

    max_iters_stage1: int = 10
    max_iters_stage2: int = 20
    trim_threshold: float = 0.06
    huber_delta: float = 0.2
    convergence_eps: float = 1e-6

    def __post_init__(self):
        for name in ("max_iters_stage1", "max_iters_stage2", "trim_threshold",
                     "huber_delta", "convergence_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_grid(cls, grid: SdfGrid, **overrides) -> "MatchConfig":
        defaults = dict(
            trim_threshold=grid.truncation,
            huber_delta=grid.w_max * grid.truncation / 3.0,
        )
        defaults.update(overrides)
        return cls(**defaults)


@dataclass(frozen=True)
class MatchResult:
    pose: Pose2
    final_cost: float
    iterations_stage1: int
    iterations_stage2: int
    points_used: int
    points_trimmed: int
    converged: bool


def sample_sdf(grid: SdfGrid, p) -> tuple[float, tuple[float, float]]:
    """Weighted distance W*F at one point with its analytic gradient.

    Bilinear over the four surrounding cell centers. Outside the interior
    (and over unknown nodes) the field saturates at w_max * truncation with
    zero gradient: constant cost, no pull.
    """
    geom = grid.geometry
    val, gx, gy = kernels.bilinear_wf(
        grid.F, grid.W, geom.origin_x, geom.origin_y, geom.resolution,
        grid.truncation, grid.w_max, np.asarray([p], dtype=np.float64),
    )
    return float(val[0]), (float(gx[0]), float(gy[0]))


def _huber_loss(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, r * r, delta * (2.0 * a - delta))


def cost(grid: SdfGrid, scan_points, pose: Pose2, huber_delta: float):
    """Total robust cost and the per-point residuals at a pose."""
    residuals = _residuals(grid, np.asarray(scan_points, dtype=np.float64), pose)
    return float(np.sum(_huber_loss(residuals, huber_delta))), residuals


def _transform(pts: np.ndarray, pose: Pose2) -> np.ndarray:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    out = np.empty_like(pts)
    out[:, 0] = pose.x + c * pts[:, 0] - s * pts[:, 1]
    out[:, 1] = pose.y + s * pts[:, 0] + c * pts[:, 1]
    return out


def _residuals(grid: SdfGrid, pts: np.ndarray, pose: Pose2) -> np.ndarray:
    geom = grid.geometry
    val, _, _ = kernels.bilinear_wf(
        grid.F, grid.W, geom.origin_x, geom.origin_y, geom.resolution,
        grid.truncation, grid.w_max, _transform(pts, pose),
    )
    return val


def _normal_equations(grid: SdfGrid, pts: np.ndarray, pose: Pose2, delta: float):
    """IRLS normal equations: H, g, and the robust cost at ``pose``."""
    geom = grid.geometry
    world = _transform(pts, pose)
    r, gx, gy = kernels.bilinear_wf(
        grid.F, grid.W, geom.origin_x, geom.origin_y, geom.resolution,
        grid.truncation, grid.w_max, world,
    )
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    # d(world point)/d(theta), chained with the field gradient.
    dxdt = -s * pts[:, 0] - c * pts[:, 1]
    dydt = c * pts[:, 0] - s * pts[:, 1]
    J = np.column_stack((gx, gy, gx * dxdt + gy * dydt))

    a = np.abs(r)
    w = np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))
    Jw = J * w[:, None]
    H = J.T @ Jw
    g = Jw.T @ r
    total = float(np.sum(_huber_loss(r, delta)))
    return H, g, total


def gauss_newton(grid: SdfGrid, scan_points, init: Pose2, max_iters: int = 10,
                 convergence_eps: float = 1e-6, huber_delta: float = 0.2) -> MatchResult:
    """Minimize the robust SDF cost from ``init``.

    Stops at the iteration cap or when the relative cost change between two
    consecutive iterations falls below ``convergence_eps``. The best iterate
    is tracked, so the returned pose never costs more than ``init``.
    """
    pts = np.asarray(scan_points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise SingularHessian("no points to match")

    pose = init
    prev_cost, _ = cost(grid, pts, pose, huber_delta)
    best_pose, best_cost = pose, prev_cost
    iters = 0
    converged = False

    for _ in range(max_iters):
        H, g, _ = _normal_equations(grid, pts, pose, huber_delta)
        trace = float(np.trace(H))
        if not np.isfinite(trace) or trace <= 0.0:
            raise SingularHessian("zero normal matrix (no in-band points)")
        eigs = np.linalg.eigvalsh(H)
        if eigs[-1] <= 0.0 or eigs[0] < _EIG_RATIO_MIN * eigs[-1]:
            raise SingularHessian("normal matrix is rank deficient")
        Hd = H + (_DAMPING * trace) * np.eye(3)
        try:
            step = np.linalg.solve(Hd, -g)
        except np.linalg.LinAlgError as exc:
            raise SingularHessian(str(exc)) from None

        pose = Pose2(pose.x + step[0], pose.y + step[1], pose.theta + step[2])
        cur_cost, _ = cost(grid, pts, pose, huber_delta)
        iters += 1
        if cur_cost < best_cost:
            best_pose, best_cost = pose, cur_cost
        rel = abs(prev_cost - cur_cost) / max(prev_cost, 1e-300)
        prev_cost = cur_cost
        if rel < convergence_eps:
            converged = True
            break

    return MatchResult(
        pose=best_pose,
        final_cost=best_cost,
        iterations_stage1=iters,
        iterations_stage2=0,
        points_used=len(pts),
        points_trimmed=0,
        converged=converged,
    )


def trim_points(grid: SdfGrid, pts: np.ndarray, pose: Pose2, threshold: float):
    """Mask of points kept for the second stage.

    A point survives when the interpolated distance value at its transformed
    location is strictly inside the threshold band and the location has
    observed support. Points over unknown cells or outside the map count as
    trimmed. The comparison runs at the grid's native float32 grain so that
    saturated cells trim at the default threshold (the truncation distance).
    """
    geom = grid.geometry
    f, w = kernels.bilinear_fw(
        grid.F, grid.W, geom.origin_x, geom.origin_y, geom.resolution,
        grid.truncation, _transform(pts, pose),
    )
    inside = np.abs(f.astype(np.float32)) < np.float32(threshold)
    return inside & (w > 0.0)


def match_two_stage(grid: SdfGrid, scan, init: Pose2,
                    cfg: MatchConfig | None = None) -> MatchResult:
    """Full registration: optimize on all points, trim, optimize again.

    Stage one estimates a pose from every valid point. Stage two discards
    the points whose distance value at the stage-one pose lies outside the
    trim threshold and re-optimizes on the survivors, which removes the
    influence of range outliers that landed inside the truncation band.
    """
    if cfg is None:
        cfg = MatchConfig.for_grid(grid)
    pts = scan_to_points(scan)
    n_valid = len(pts)

    stage1 = gauss_newton(grid, pts, init, cfg.max_iters_stage1,
                          cfg.convergence_eps, cfg.huber_delta)

    keep = trim_points(grid, pts, stage1.pose, cfg.trim_threshold)
    n_keep = int(keep.sum())
    if n_keep < 10:
        raise TooFewPoints(f"only {n_keep} of {n_valid} points survived trimming")

    stage2 = gauss_newton(grid, pts[keep], stage1.pose, cfg.max_iters_stage2,
                          cfg.convergence_eps, cfg.huber_delta)
    return MatchResult(
        pose=stage2.pose,
        final_cost=stage2.final_cost,
        iterations_stage1=stage1.iterations_stage1,
        iterations_stage2=stage2.iterations_stage1,
        points_used=n_keep,
        points_trimmed=n_valid - n_keep,
        converged=stage2.converged,
    )


def predict_pose(history, target_time: float | None = None) -> Pose2:
    """Constant-velocity extrapolation from recent (timestamp, pose) pairs.

    With one prior pose, returns it unchanged. With two or more, linear and
    angular velocities come from the last two entries; the default target
    time extends the last interval once more.
    """
    if len(history) == 0:
        raise ValueError("need at least one prior pose")
    if len(history) == 1:
        return history[-1][1]
    (t1, p1), (t2, p2) = history[-2], history[-1]
    dt = t2 - t1
    if dt <= 0.0:
        return p2
    if target_time is None:
        target_time = t2 + dt
    tau = (target_time - t2) / dt
    return Pose2(
        p2.x + tau * (p2.x - p1.x),
        p2.y + tau * (p2.y - p1.y),
        p2.theta + tau * normalize_angle(p2.theta - p1.theta),
    )

"""SLAM front end: match each scan against the active submap, then insert it.

The first scan fixes the map frame at the identity pose. Every later scan is
initialized by constant-velocity prediction, registered against the older
unfinished submap, and integrated into the staggered submap window. Matching
failures (degenerate geometry, over-trimming) fall back to the predicted
pose and are counted, not fatal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import IDENTITY, Pose2, compose, inverse
from .mapping import ExpansionPolicy
from .matching import MatchConfig, SingularHessian, TooFewPoints, match_two_stage, predict_pose
from .submaps import SubmapCollection


@dataclass
class SlamParams:
    resolution: float = 0.05
    truncation: float = 0.06
    w_max: float = 10.0
    max_expansions: int | None = None  # None selects by resolution
    submap_scans: int = 50
    submap_cells: int = 100
    max_iters_stage1: int = 10
    max_iters_stage2: int = 20
    trim_threshold: float | None = None  # None means the truncation distance
    huber_delta: float | None = None  # None means w_max * truncation / 3
    convergence_eps: float = 1e-6

    def expansion_policy(self) -> ExpansionPolicy:
        if self.max_expansions is None:
            return ExpansionPolicy.for_resolution(self.resolution)
        return ExpansionPolicy(self.max_expansions)

    def match_config(self) -> MatchConfig:
        return MatchConfig(
            max_iters_stage1=self.max_iters_stage1,
            max_iters_stage2=self.max_iters_stage2,
            trim_threshold=self.trim_threshold if self.trim_threshold is not None
            else self.truncation,
            huber_delta=self.huber_delta if self.huber_delta is not None
            else self.w_max * self.truncation / 3.0,
            convergence_eps=self.convergence_eps,
        )


@dataclass
class SlamResult:
    trajectory: list[tuple[float, Pose2]]
    collection: SubmapCollection
    match_failures: int = 0


def run_slam(records, params: SlamParams | None = None) -> SlamResult:
    """Process a scan log and return the trajectory plus the submap set.

    All submaps are marked finished on return so they can be merged
    directly.
    """
    if params is None:
        params = SlamParams()
    policy = params.expansion_policy()
    cfg = params.match_config()
    collection = SubmapCollection(
        scans_per_submap=params.submap_scans,
        cells=params.submap_cells,
        resolution=params.resolution,
        truncation=params.truncation,
        w_max=params.w_max,
    )

    trajectory: list[tuple[float, Pose2]] = []
    failures = 0
    for record in records:
        scan = record.scan
        target = collection.matching_target()
        if target is None:
            pose = IDENTITY
        else:
            init = predict_pose(trajectory, target_time=record.timestamp)
            init_local = compose(inverse(target.pose), init)
            try:
                result = match_two_stage(target.grid, scan, init_local, cfg)
                pose = compose(target.pose, result.pose)
            except (SingularHessian, TooFewPoints):
                failures += 1
                pose = init
        collection.add_scan(scan, pose, policy)
        trajectory.append((record.timestamp, pose))

    collection.finish_all()
    return SlamResult(trajectory=trajectory, collection=collection,
                      match_failures=failures)

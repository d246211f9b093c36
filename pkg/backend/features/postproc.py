#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Image-space post-selection: kinematic distance envelope, ego-width band
projection and filtering against 2D obstacle and lane detections.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
import shapely
from shapely.geometry import MultiPoint
from shapely.geometry import box as shapely_box

from backend.base.custom_exceptions import (EmptyCandidateSetError,
                                            InvalidSettingValue,
                                            ShapeMismatchError)
from backend.base.definitions import Config, DiscardReason
from backend.base.logging import LOGGER
from backend.features.decoder import CandidateSet
from backend.features.scene.geometry import polyline_length, project_points
from backend.features.scene.types import (CameraModel, Detections2D, EgoState,
                                          Scenario, Trajectory)

LENGTH_SLACK = 1e-9


class DistanceEnvelope(NamedTuple):
    d_min: float
    d_max: float

    def contains(self, distance: float) -> bool:
        return self.d_min - LENGTH_SLACK <= distance <= self.d_max + LENGTH_SLACK


def travel_distance(speed: float, accel: float, horizon: float) -> float:
    """Distance covered under constant acceleration; speed never turns negative."""
    if accel < 0:
        stop_time = speed / -accel
        if stop_time < horizon:
            return max(0.0, speed * speed / (-2.0 * accel))
    return max(0.0, speed * horizon + 0.5 * accel * horizon * horizon)


def distance_envelope(ego: EgoState, horizon: float, a_min: float, a_max: float) -> DistanceEnvelope:
    """Minimum and maximum feasible travel over the horizon.

    Args:
        ego (EgoState): Current speed of the ego vehicle.
        horizon (float): Seconds.
        a_min (float): Strongest deceleration, m/s^2.
        a_max (float): Strongest acceleration, m/s^2.

    Returns:
        DistanceEnvelope: The bounds in meters.
    """
    if horizon <= 0:
        raise InvalidSettingValue(f"Envelope horizon must be positive, got {horizon}")
    if a_min > a_max:
        raise InvalidSettingValue(f"a_min {a_min} exceeds a_max {a_max}")
    return DistanceEnvelope(
        travel_distance(ego.speed, a_min, horizon),
        travel_distance(ego.speed, a_max, horizon)
    )


@dataclass(frozen=True, eq=False)
class ProjectedBand:
    """Left and right band edges in pixels, (T, 2) each, and per-pose visibility."""
    left: np.ndarray
    right: np.ndarray
    visible: np.ndarray


def project_band(trajectory: Trajectory, ego_width: float, camera: CameraModel) -> ProjectedBand:
    """Project the ego-width band around a trajectory onto the image.

    Each pose is offset by half the width to each side on the ground plane.
    """
    poses = trajectory.array()
    normal = np.stack([-np.sin(poses[:, 2]), np.cos(poses[:, 2])], axis=1)
    half = ego_width / 2.0
    ground = np.zeros((len(poses), 3))

    ground[:, :2] = poses[:, :2] + half * normal
    left, left_visible = project_points(ground, camera)
    ground[:, :2] = poses[:, :2] - half * normal
    right, right_visible = project_points(ground, camera)
    return ProjectedBand(left, right, left_visible & right_visible)


def band_hits_obstacle(band: ProjectedBand, detections: Detections2D) -> bool:
    """Whether any visible band segment overlaps an obstacle box."""
    if not detections.obstacles:
        return False
    boxes = [shapely_box(b.u_min, b.v_min, b.u_max, b.v_max) for b in detections.obstacles]
    tree = shapely.STRtree(boxes)
    for k in range(len(band.visible) - 1):
        if not (band.visible[k] and band.visible[k + 1]):
            continue
        quad = MultiPoint([
            tuple(band.left[k]), tuple(band.left[k + 1]),
            tuple(band.right[k + 1]), tuple(band.right[k])
        ]).convex_hull
        if len(tree.query(quad, predicate="intersects")):
            return True
    return False


class LaneCorridor(NamedTuple):
    """Leftmost and rightmost lane lines, each sorted by image row v."""
    left: np.ndarray
    right: np.ndarray
    v_min: float
    v_max: float


def lane_corridor(detections: Detections2D) -> Optional[LaneCorridor]:
    """Corridor between the outermost lane lines; None with fewer than two."""
    lines = [np.asarray(line, dtype=float) for line in detections.lane_lines if len(line) >= 2]
    if len(lines) < 2:
        return None
    means = [float(np.mean(line[:, 0])) for line in lines]
    left = lines[int(np.argmin(means))]
    right = lines[int(np.argmax(means))]
    left = left[np.argsort(left[:, 1], kind="stable")]
    right = right[np.argsort(right[:, 1], kind="stable")]
    v_min = max(left[0, 1], right[0, 1])
    v_max = min(left[-1, 1], right[-1, 1])
    if v_min > v_max:
        return None
    return LaneCorridor(left, right, v_min, v_max)


def band_leaves_corridor(band: ProjectedBand, corridor: LaneCorridor, camera: CameraModel) -> bool:
    """Whether a visible band point lies outside the corridor where both lines are observed."""
    for points in (band.left, band.right):
        u, v = points[:, 0], points[:, 1]
        in_image = (u >= 0) & (u <= camera.width) & (v >= 0) & (v <= camera.height)
        checked = band.visible & in_image & (v >= corridor.v_min) & (v <= corridor.v_max)
        if not np.any(checked):
            continue
        u_left = np.interp(v[checked], corridor.left[:, 1], corridor.left[:, 0])
        u_right = np.interp(v[checked], corridor.right[:, 1], corridor.right[:, 0])
        if np.any(u[checked] < u_left) or np.any(u[checked] > u_right):
            return True
    return False


@dataclass
class FilterResult:
    survivors: List[int]
    chosen: int
    fallback: bool
    reasons: List[List[DiscardReason]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "survivors": list(self.survivors),
            "chosen": self.chosen,
            "fallback": self.fallback,
            "reasons": [[r.value for r in rs] for rs in self.reasons]
        }


def filter_candidates(
    candidates: CandidateSet,
    predictions: Sequence[Union[float, NamedTuple]],
    scenario: Scenario,
    config: Config,
    envelope: Optional[DistanceEnvelope] = None
) -> FilterResult:
    """Drop candidates that break the envelope, hit an obstacle or leave the lane corridor.

    Args:
        candidates (CandidateSet): The candidates.
        predictions (Sequence): Scorer predictions, or plain overall scores,
        per candidate.
        scenario (Scenario): Supplies the ego state, camera and detections.
        config (Config): Envelope accelerations and horizon.
        envelope (Optional[DistanceEnvelope], optional): Overrides the
        kinematic envelope.
            Defaults to None.

    Raises:
        EmptyCandidateSetError: No candidates.

    Returns:
        FilterResult: Survivors, chosen index, fallback flag and per-candidate
        discard reasons.
    """
    n = len(candidates)
    if n == 0:
        raise EmptyCandidateSetError("Cannot filter an empty candidate set")
    if len(predictions) != n:
        raise ShapeMismatchError(f"{len(predictions)} predictions for {n} candidates")
    ego, camera, detections = scenario.ego, scenario.camera, scenario.detections2d

    if envelope is None:
        horizon = candidates.trajectories[0].dt * len(candidates.trajectories[0])
        envelope = distance_envelope(ego, horizon, config.envelope_a_min, config.envelope_a_max)

    corridor = lane_corridor(detections)
    if corridor is None and detections.lane_lines:
        LOGGER.debug("Fewer than two usable lane lines, skipping the lane corridor filter")

    reasons: List[List[DiscardReason]] = []
    survivors: List[int] = []
    for i, traj in enumerate(candidates.trajectories):
        why = []
        if not envelope.contains(polyline_length(traj.positions())):
            why.append(DiscardReason.DISTANCE_ENVELOPE)

        band = project_band(traj, ego.width, camera)
        if band_hits_obstacle(band, detections):
            why.append(DiscardReason.OBSTACLE)
        if corridor is not None and band_leaves_corridor(band, corridor, camera):
            why.append(DiscardReason.LANE_CORRIDOR)

        reasons.append(why)
        if not why:
            survivors.append(i)

    scores = np.array([float(getattr(p, "epdms", p)) for p in predictions])
    if survivors:
        chosen = survivors[int(np.argmax(scores[survivors]))]
        return FilterResult(survivors, chosen, False, reasons)

    chosen = int(np.argmax(scores))
    LOGGER.warning(f"All {n} candidates were filtered out, falling back to candidate {chosen}")
    return FilterResult([], chosen, True, reasons)

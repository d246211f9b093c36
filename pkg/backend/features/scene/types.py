#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Domain types for scenarios, trajectories and the camera.
All types are frozen; scenario geometry is in a world frame while every
Trajectory is expressed in the ego frame (ego at the origin, heading +x).
"""

import math
from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple

import numpy as np

from backend.base.custom_exceptions import ScenarioValidationError
from backend.base.definitions import Constants, LightState

Point = Tuple[float, float]
Polygon = Tuple[Point, ...]


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi].

    In-range values are returned unchanged, so wrapping is idempotent and
    exact on already normalised angles.
    """
    if -math.pi < angle <= math.pi:
        return float(angle)
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return float(wrapped)


def normalize_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorised `normalize_angle`."""
    angles = np.asarray(angles, dtype=float)
    out = angles.copy()
    outside = (out <= -math.pi) | (out > math.pi)
    if np.any(outside):
        wrapped = np.remainder(out[outside] + math.pi, 2.0 * math.pi) - math.pi
        wrapped[wrapped <= -math.pi] += 2.0 * math.pi
        out[outside] = wrapped
    return out


@dataclass(frozen=True)
class Pose2:
    """Planar pose; yaw is kept in (-pi, pi]."""
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass(frozen=True)
class Trajectory:
    """T future poses sampled every `dt` seconds, in the ego frame."""
    poses: Tuple[Pose2, ...]
    dt: float = Constants.DEFAULT_DT

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        if not self.poses:
            raise ScenarioValidationError("trajectory.poses", "needs at least one pose")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ScenarioValidationError("trajectory.dt", f"must be positive, got {self.dt}")
        for pose in self.poses:
            if not all(math.isfinite(v) for v in pose.as_tuple()):
                raise ScenarioValidationError("trajectory.poses", "coordinates must be finite")

    def __len__(self) -> int:
        return len(self.poses)

    def array(self) -> np.ndarray:
        """The poses as a (T, 3) array of x, y, yaw."""
        return np.array([p.as_tuple() for p in self.poses], dtype=float)

    def positions(self) -> np.ndarray:
        """The poses as a (T, 2) array of x, y."""
        return self.array()[:, :2]

    @classmethod
    def from_array(cls, values: np.ndarray, dt: float = Constants.DEFAULT_DT) -> "Trajectory":
        """Build a trajectory from a (T, 3) array."""
        values = np.asarray(values, dtype=float)
        return cls(tuple(Pose2(*row) for row in values[:, :3]), dt)


@dataclass(frozen=True)
class EgoState:
    pose: Pose2
    speed: float
    accel: float
    width: float
    length: float


@dataclass(frozen=True)
class Agent:
    """A background agent following its recorded track (index 0 is now)."""
    id: str
    width: float
    length: float
    track: Tuple[Pose2, ...]
    is_stationary: bool = False

    def track_array(self) -> np.ndarray:
        return np.array([p.as_tuple() for p in self.track], dtype=float)


@dataclass(frozen=True)
class Centerline:
    """Lane centreline with a travel direction per point."""
    points: Tuple[Point, ...]
    headings: Tuple[float, ...]

    def array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)


@dataclass(frozen=True)
class TrafficLight:
    stop_line: Tuple[Point, Point]
    state: LightState


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera; the extrinsic maps ego points as p_cam = R p_ego + t."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: Tuple[Tuple[float, float, float], ...]
    translation: Tuple[float, float, float]

    def rotation_matrix(self) -> np.ndarray:
        return np.array(self.rotation, dtype=float)

    def translation_vector(self) -> np.ndarray:
        return np.array(self.translation, dtype=float)


@dataclass(frozen=True)
class Box2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float


@dataclass(frozen=True)
class Detections2D:
    lane_lines: Tuple[Tuple[Point, ...], ...] = ()
    obstacles: Tuple[Box2D, ...] = ()


@dataclass(frozen=True)
class Scenario:
    id: str
    ego: EgoState
    ego_history: Tuple[Pose2, ...]
    agents: Tuple[Agent, ...]
    drivable_area: Tuple[Polygon, ...]
    centerlines: Tuple[Centerline, ...]
    traffic_lights: Tuple[TrafficLight, ...]
    route: Tuple[Point, ...]
    human_trajectory: Trajectory
    prev_plan: Optional[Trajectory]
    camera: CameraModel
    detections2d: Detections2D = field(default_factory=Detections2D)
    tags: FrozenSet[str] = frozenset()

    @property
    def horizon_steps(self) -> int:
        return len(self.human_trajectory)

    @property
    def dt(self) -> float:
        return self.human_trajectory.dt

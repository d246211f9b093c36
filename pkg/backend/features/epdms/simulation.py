#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Open-loop rollout of a planned trajectory against recorded agent tracks
and the nine sub-metrics computed on it.

The ego follows the T planned poses (steps 1..T, step 0 is the current
pose); agent step k is track[k].
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString

from backend.base.definitions import Config, LightState
from backend.features.epdms.metrics import (MetricReport, MetricWeights,
                                            SubMetrics, aggregate_epdms,
                                            filtered_metrics)
from backend.features.scene.geometry import (footprints, nearest_centerline,
                                             obb_intersects, points_in_drivable,
                                             poses_to_world, route_progress)
from backend.features.scene.types import Agent, Scenario, Trajectory, normalize_angles

EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Rollout:
    """World poses (T+1, 3) with the current pose first, and step speeds."""
    poses: np.ndarray
    speeds: np.ndarray
    dt: float
    width: float
    length: float

    @property
    def steps(self) -> int:
        return len(self.poses) - 1

    def footprints(self) -> np.ndarray:
        """(T, 4, 2) footprints of the planned steps."""
        return footprints(self.poses[1:], self.width, self.length)


def rollout(scenario: Scenario, trajectory: Trajectory) -> Rollout:
    ego = scenario.ego
    world = poses_to_world(ego.pose, trajectory.array())
    poses = np.vstack([np.array([ego.pose.as_tuple()]), world])
    steps = np.diff(poses[:, :2], axis=0)
    speeds = np.concatenate([[ego.speed], np.hypot(steps[:, 0], steps[:, 1]) / trajectory.dt])
    return Rollout(poses, speeds, trajectory.dt, ego.width, ego.length)


def _radius(width: float, length: float) -> float:
    return 0.5 * math.hypot(width, length)


def _agent_footprint(agent: Agent, pose: np.ndarray) -> np.ndarray:
    return footprints(pose[None], agent.width, agent.length)[0]


def no_collision(scenario: Scenario, roll: Rollout, config: Config) -> float:
    """0 on an at-fault overlap with any agent at any step.

    Being hit from behind the rear axle while (nearly) stopped is not at fault.
    """
    ego_fps = roll.footprints()
    ego_r = _radius(roll.width, roll.length)
    for agent in scenario.agents:
        track = agent.track_array()
        reach = ego_r + _radius(agent.width, agent.length)
        for k in range(1, roll.steps + 1):
            x, y, yaw = roll.poses[k]
            if math.hypot(track[k, 0] - x, track[k, 1] - y) > reach:
                continue
            if not obb_intersects(ego_fps[k - 1], _agent_footprint(agent, track[k])):
                continue
            if roll.speeds[k] < config.stopped_speed:
                ux, uy = math.cos(yaw), math.sin(yaw)
                rear_x = x - config.rear_axle_offset * ux
                rear_y = y - config.rear_axle_offset * uy
                if (track[k, 0] - rear_x) * ux + (track[k, 1] - rear_y) * uy < 0:
                    continue
            return 0.0
    return 1.0


def drivable_area_compliance(scenario: Scenario, roll: Rollout) -> float:
    corners = roll.footprints()
    return 1.0 if bool(np.all(points_in_drivable(corners, scenario.drivable_area))) else 0.0


def driving_direction_compliance(scenario: Scenario, roll: Rollout, config: Config) -> float:
    """Graded on the distance driven against the nearest lane direction."""
    lanes = nearest_centerline(roll.poses[1:, :2], scenario.centerlines)
    if lanes is None:
        return 1.0
    steps = np.diff(roll.poses[:, :2], axis=0)
    along = steps[:, 0] * np.cos(lanes.heading) + steps[:, 1] * np.sin(lanes.heading)
    against = float(np.sum(np.maximum(0.0, -along)))
    if against < config.ddc_minor:
        return 1.0
    if against < config.ddc_major:
        return 0.5
    return 0.0


def traffic_light_compliance(scenario: Scenario, roll: Rollout) -> float:
    """0 if a footprint touches, or the centre path crosses, a red stop line."""
    red = [light for light in scenario.traffic_lights if light.state is LightState.RED]
    if not red:
        return 1.0

    polygons = shapely.polygons(roll.footprints())
    starts, ends = roll.poses[:-1, :2], roll.poses[1:, :2]
    moving = np.hypot(*(ends - starts).T) > 0
    paths = shapely.linestrings(np.stack([starts[moving], ends[moving]], axis=1)) if np.any(moving) else []

    for light in red:
        line = LineString(light.stop_line)
        if np.any(shapely.intersects(polygons, line)):
            return 0.0
        if len(paths) and np.any(shapely.intersects(paths, line)):
            return 0.0
    return 1.0


def route_advance(scenario: Scenario, roll: Rollout) -> float:
    progress = route_progress(scenario.route, roll.poses[[0, -1], :2])
    return float(progress[1] - progress[0])


def ego_progress(agent_progress: float, human_progress: float, config: Config) -> float:
    if human_progress < config.ep_unachievable:
        return 1.0
    ratio = agent_progress / max(human_progress, config.ep_min_progress)
    return float(min(1.0, max(0.0, ratio)))


def time_to_collision(scenario: Scenario, roll: Rollout, config: Config) -> float:
    """0 if constant-velocity projections overlap within the horizon while the ego moves."""
    count = int(round(config.ttc_horizon / config.ttc_step))
    offsets = config.ttc_step * np.arange(1, count + 1)
    ego_r = _radius(roll.width, roll.length)

    for k in range(1, roll.steps + 1):
        if roll.speeds[k] < config.stopped_speed:
            continue
        ego_now = roll.poses[k]
        ego_vel = (roll.poses[k, :2] - roll.poses[k - 1, :2]) / roll.dt
        ego_fp = footprints(ego_now[None], roll.width, roll.length)[0]

        for agent in scenario.agents:
            track = agent.track_array()
            agent_now = track[k]
            agent_vel = np.zeros(2) if agent.is_stationary else (track[k, :2] - track[k - 1, :2]) / roll.dt
            gap = math.hypot(agent_now[0] - ego_now[0], agent_now[1] - ego_now[1])
            closing = math.hypot(*(agent_vel - ego_vel)) * offsets[-1]
            if gap - closing > ego_r + _radius(agent.width, agent.length):
                continue

            agent_fp = _agent_footprint(agent, agent_now)
            for s in offsets:
                if obb_intersects(ego_fp + ego_vel * s, agent_fp + agent_vel * s):
                    return 0.0
    return 1.0


def history_comfort(scenario: Scenario, roll: Rollout, config: Config) -> float:
    """Finite-difference kinematics over the last two history poses and the plan."""
    history = np.array([p.as_tuple() for p in scenario.ego_history[-2:]]).reshape(-1, 3)
    poses = np.vstack([history, roll.poses])
    dt = roll.dt

    steps = np.diff(poses[:, :2], axis=0)
    speed = np.hypot(steps[:, 0], steps[:, 1]) / dt
    yaw_rate = normalize_angles(np.diff(poses[:, 2])) / dt
    lon = np.diff(speed) / dt
    jerk = np.diff(lon) / dt
    lat = speed * yaw_rate

    checks = (
        (lon, config.hc_max_lon_accel),
        (lat, config.hc_max_lat_accel),
        (jerk, config.hc_max_jerk),
        (yaw_rate, config.hc_max_yaw_rate)
    )
    for values, limit in checks:
        if values.size and np.max(np.abs(values)) > limit + EPS:
            return 0.0
    return 1.0


def lane_keeping(scenario: Scenario, roll: Rollout, config: Config) -> float:
    lanes = nearest_centerline(roll.poses[1:, :2], scenario.centerlines)
    if lanes is None:
        return 1.0
    within = int(np.count_nonzero(lanes.distance <= config.lk_max_deviation))
    return within / roll.steps


def scalar_accelerations(trajectory: Trajectory) -> np.ndarray:
    """Longitudinal accelerations a_k, k = 2..T, from ego-frame step speeds."""
    positions = np.vstack([np.zeros((1, 2)), trajectory.positions()])
    steps = np.diff(positions, axis=0)
    speed = np.hypot(steps[:, 0], steps[:, 1]) / trajectory.dt
    return np.diff(speed) / trajectory.dt


def extended_comfort(trajectory: Trajectory, prev_plan: Optional[Trajectory], config: Config) -> float:
    """Compare accelerations with the previous plan shifted by one step."""
    if prev_plan is None:
        return 1.0
    current = scalar_accelerations(trajectory)
    previous = scalar_accelerations(prev_plan)
    # current a_k pairs with previous a_{k+1}
    n = min(len(current), len(previous) - 1)
    if n <= 0:
        return 1.0
    diff = np.abs(current[:n] - previous[1:n + 1])
    return 1.0 if float(np.max(diff)) <= config.ec_max_accel_diff + EPS else 0.0


def eval_submetrics(
    scenario: Scenario,
    trajectory: Trajectory,
    config: Config = Config(),
    human_progress: Optional[float] = None
) -> SubMetrics:
    """All nine sub-metrics of one trajectory.

    Args:
        scenario (Scenario): The scene.
        trajectory (Trajectory): Ego-frame plan.
        config (Config, optional): Thresholds.
            Defaults to Config().
        human_progress (Optional[float], optional): Route progress of the
        human trajectory when already known.
            Defaults to computing it.

    Returns:
        SubMetrics: The values.
    """
    roll = rollout(scenario, trajectory)
    if human_progress is None:
        human_progress = route_advance(scenario, rollout(scenario, scenario.human_trajectory))

    return SubMetrics(
        nc=no_collision(scenario, roll, config),
        dac=drivable_area_compliance(scenario, roll),
        ddc=driving_direction_compliance(scenario, roll, config),
        tlc=traffic_light_compliance(scenario, roll),
        ep=ego_progress(route_advance(scenario, roll), human_progress, config),
        ttc=time_to_collision(scenario, roll, config),
        lk=lane_keeping(scenario, roll, config),
        hc=history_comfort(scenario, roll, config),
        ec=extended_comfort(trajectory, scenario.prev_plan, config)
    )


def evaluate(
    scenario: Scenario,
    trajectory: Trajectory,
    config: Config = Config(),
    human: Optional[SubMetrics] = None,
    human_progress: Optional[float] = None
) -> MetricReport:
    """Score a trajectory against the scene and its human reference.

    Args:
        scenario (Scenario): The scene.
        trajectory (Trajectory): Ego-frame plan.
        config (Config, optional): Thresholds and weights.
            Defaults to Config().
        human (Optional[SubMetrics], optional): Precomputed human sub-metrics.
            Defaults to computing them.
        human_progress (Optional[float], optional): Precomputed route
        progress of the human trajectory.
            Defaults to computing it.

    Returns:
        MetricReport: Agent, human and filtered sub-metrics plus the score.
    """
    if human_progress is None:
        human_progress = route_advance(scenario, rollout(scenario, scenario.human_trajectory))
    if human is None:
        human = eval_submetrics(scenario, scenario.human_trajectory, config, human_progress)
    agent = eval_submetrics(scenario, trajectory, config, human_progress)
    return MetricReport(
        agent=agent,
        human=human,
        filtered=filtered_metrics(agent, human),
        epdms=aggregate_epdms(agent, human, MetricWeights.from_config(config))
    )


def evaluate_many(
    scenario: Scenario,
    trajectories: Sequence[Trajectory],
    config: Config = Config()
) -> List[MetricReport]:
    """`evaluate` over several plans of one scene; the human rollout runs once."""
    human_progress = route_advance(scenario, rollout(scenario, scenario.human_trajectory))
    human = eval_submetrics(scenario, scenario.human_trajectory, config, human_progress)
    return [evaluate(scenario, traj, config, human, human_progress) for traj in trajectories]

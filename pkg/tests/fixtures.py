#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Hand-built scenes shared by the unit tests.

The base scene is a straight two-lane road along +x: the ego lane is
centred on y = 0, the drivable strip spans y in [-3.5, 3.5] and the ego
drives at `speed` m/s with a straight history behind it.
"""

import math
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from backend.base.definitions import Config, Constants, LightState
from backend.features.scene.geometry import local_to_world, poses_to_world
from backend.features.scene.types import (Agent, Centerline, Detections2D,
                                          EgoState, Pose2, Scenario,
                                          TrafficLight, Trajectory)
from backend.features.synthetic import default_camera

T = Constants.DEFAULT_HORIZON_STEPS
DT = Constants.DEFAULT_DT

# Small models keep the tests fast
SMALL_CONFIG = Config(
    num_anchors=6,
    embed_dim=12,
    pe_dim=4,
    bev_resolution=24,
    epochs=2,
    batch_size=2,
    learning_rate=1e-2
)


def straight_trajectory(speed: float = 5.0, y: float = 0.0, steps: int = T, dt: float = DT) -> Trajectory:
    """Constant-speed drive along +x at lateral offset `y`."""
    values = np.zeros((steps, 3))
    values[:, 0] = speed * dt * np.arange(1, steps + 1)
    values[:, 1] = y
    return Trajectory.from_array(values, dt)


def trajectory_from_positions(positions: np.ndarray, dt: float = DT) -> Trajectory:
    """Trajectory with yaw zero at every step."""
    values = np.zeros((len(positions), 3))
    values[:, :2] = positions
    return Trajectory.from_array(values, dt)


def parked_agent(agent_id: str, x: float, y: float = 0.0, yaw: float = 0.0, steps: int = T) -> Agent:
    pose = Pose2(x, y, yaw)
    return Agent(agent_id, 1.9, 4.6, (pose,) * (steps + 1), True)


def moving_agent(agent_id: str, x: float, speed: float, y: float = 0.0, steps: int = T, dt: float = DT) -> Agent:
    track = tuple(Pose2(x + speed * dt * k, y, 0.0 if speed >= 0 else math.pi) for k in range(steps + 1))
    return Agent(agent_id, 1.9, 4.6, track, False)


def stop_line(x: float, state: LightState = LightState.RED) -> TrafficLight:
    return TrafficLight(((x, -3.5), (x, 3.5)), state)


def make_scenario(
    scenario_id: str = "road",
    speed: float = 5.0,
    agents: Sequence[Agent] = (),
    lights: Sequence[TrafficLight] = (),
    human: Optional[Trajectory] = None,
    prev_plan: Optional[Trajectory] = None,
    detections: Detections2D = Detections2D(),
    tags: Sequence[str] = (),
    steps: int = T
) -> Scenario:
    """The straight-road scene with the ego at the origin heading +x."""
    lane_x = np.arange(-40.0, 101.0, 1.0)
    ego_lane = Centerline(tuple((float(x), 0.0) for x in lane_x), (0.0,) * len(lane_x))
    oncoming = Centerline(tuple((float(x), 3.5) for x in lane_x[::-1]), (math.pi,) * len(lane_x))

    return Scenario(
        id=scenario_id,
        ego=EgoState(Pose2(0.0, 0.0, 0.0), speed, 0.0, 1.9, 4.6),
        ego_history=(Pose2(-2.0 * speed * DT, 0.0, 0.0), Pose2(-speed * DT, 0.0, 0.0)),
        agents=tuple(agents),
        drivable_area=(((-40.0, -3.5), (100.0, -3.5), (100.0, 5.25), (-40.0, 5.25)),),
        centerlines=(ego_lane, oncoming),
        traffic_lights=tuple(lights),
        route=((-40.0, 0.0), (100.0, 0.0)),
        human_trajectory=human if human is not None else straight_trajectory(speed, steps=steps),
        prev_plan=prev_plan,
        camera=default_camera(),
        detections2d=detections,
        tags=frozenset(tags)
    )


def transform_scenario(scenario: Scenario, pose: Pose2) -> Scenario:
    """Apply the rigid transform `pose` to every world-frame element.

    Ego-frame trajectories, the camera and the detections are unchanged.
    """
    def points(values):
        return tuple((float(x), float(y)) for x, y in local_to_world(pose, np.asarray(values, dtype=float)))

    def poses(values):
        return tuple(Pose2(*p) for p in poses_to_world(pose, np.array([p.as_tuple() for p in values])))

    ego = replace(scenario.ego, pose=poses([scenario.ego.pose])[0])
    return replace(
        scenario,
        ego=ego,
        ego_history=poses(scenario.ego_history) if scenario.ego_history else (),
        agents=tuple(replace(a, track=poses(a.track)) for a in scenario.agents),
        drivable_area=tuple(points(poly) for poly in scenario.drivable_area),
        centerlines=tuple(
            Centerline(points(lane.points), tuple(Pose2(0, 0, h + pose.yaw).yaw for h in lane.headings))
            for lane in scenario.centerlines
        ),
        traffic_lights=tuple(replace(light, stop_line=points(light.stop_line)) for light in scenario.traffic_lights),
        route=points(scenario.route)
    )

#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Deterministic synthetic scenarios: two-lane straights and curves,
signalised junctions and off-road human drifts, each placed in the world
by a random rigid transform.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from shapely.geometry import LineString
from shapely.geometry.polygon import orient

from backend.base.custom_exceptions import InvalidSettingValue, OutputFolderError
from backend.base.definitions import Config, Constants, HardCaseTag, LightState
from backend.base.helpers import ensure_dir_exists
from backend.base.logging import LOGGER
from backend.features.scene.geometry import (footprints, local_to_world,
                                             poses_to_local, poses_to_world,
                                             project_points)
from backend.features.scene.io import save_scenario
from backend.features.scene.types import (Agent, Box2D, CameraModel,
                                          Centerline, Detections2D, EgoState,
                                          Point, Polygon, Pose2, Scenario,
                                          TrafficLight, Trajectory,
                                          normalize_angles)

SCENE_KINDS = (
    "straight", "curve", "junction", "straight",
    "curve", "junction", "straight", "violation"
)

LANE_WIDTH = 3.5
VEHICLE_WIDTH = 1.9
VEHICLE_LENGTH = 4.6
VEHICLE_HEIGHT = 1.5
HISTORY_STEPS = 4
BACK_LENGTH = 40.0
LANE_SPACING = 1.0
ROUTE_SPACING = 2.0
EDGE_RANGE = (3.0, 60.0)
EDGE_SPACING = 1.5
CURVATURES = (0.03, 0.06, 0.1, 0.15, 0.22)
DRIFT_OFFSET = -2.6
TANGENT_STEP = 1e-3

CAMERA_POSITION = np.array([1.0, 0.0, 1.6])
CAMERA_ROTATION = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
MIN_BOX_DEPTH = 0.5


def default_camera() -> CameraModel:
    """Forward-looking 1280x720 camera 1.6 m above the ground, 1 m ahead of the ego centre."""
    translation = -CAMERA_ROTATION @ CAMERA_POSITION
    return CameraModel(
        fx=800.0, fy=800.0, cx=640.0, cy=360.0,
        width=1280, height=720,
        rotation=tuple(tuple(float(v) for v in row) for row in CAMERA_ROTATION),
        translation=tuple(float(v) for v in translation)
    )


class _Path:
    """Arc-length parameterised polyline; `start` is the arc length of the first point."""

    def __init__(self, points: np.ndarray, start: float = 0.0):
        pts = np.asarray(points, dtype=float)
        steps = np.diff(pts, axis=0)
        lengths = np.hypot(steps[:, 0], steps[:, 1])
        keep = np.concatenate([[True], lengths > 1e-9])
        pts = pts[keep]
        steps = np.diff(pts, axis=0)
        lengths = np.hypot(steps[:, 0], steps[:, 1])

        seg_yaw = np.unwrap(np.arctan2(steps[:, 1], steps[:, 0]))
        inner = 0.5 * (seg_yaw[:-1] + seg_yaw[1:])
        self.points = pts
        self.s = start + np.concatenate([[0.0], np.cumsum(lengths)])
        self.yaw = np.concatenate([seg_yaw[:1], inner, seg_yaw[-1:]])

    @classmethod
    def from_pieces(cls, pieces: Sequence[Tuple[float, float]], back: float = BACK_LENGTH, step: float = 0.5) -> "_Path":
        """Chain straight and constant-curvature pieces of (length, curvature), starting
        `back` meters behind the origin on the +x axis."""
        x, y, yaw = -back, 0.0, 0.0
        points = [(x, y)]
        for length, curvature in [(back, 0.0)] + list(pieces):
            n = max(1, int(math.ceil(length / step)))
            ds = length / n
            for _ in range(n):
                if curvature == 0.0:
                    x += ds * math.cos(yaw)
                    y += ds * math.sin(yaw)
                else:
                    new_yaw = yaw + curvature * ds
                    x += (math.sin(new_yaw) - math.sin(yaw)) / curvature
                    y -= (math.cos(new_yaw) - math.cos(yaw)) / curvature
                    yaw = new_yaw
                points.append((x, y))
        return cls(np.array(points), start=-back)

    @property
    def end(self) -> float:
        return float(self.s[-1])

    def poses(self, s: np.ndarray) -> np.ndarray:
        """(n, 3) poses at arc lengths `s`, extrapolated straight past either end."""
        s = np.asarray(s, dtype=float).reshape(-1)
        clipped = np.clip(s, self.s[0], self.s[-1])
        x = np.interp(clipped, self.s, self.points[:, 0])
        y = np.interp(clipped, self.s, self.points[:, 1])
        yaw = np.interp(clipped, self.s, self.yaw)
        extra = s - clipped
        return np.stack([x + extra * np.cos(yaw), y + extra * np.sin(yaw), normalize_angles(yaw)], axis=1)

    def offset(self, distance: float, s_from: float, s_to: float, spacing: float) -> Tuple[np.ndarray, np.ndarray]:
        """Points shifted `distance` to the left, with the path headings."""
        s = np.linspace(s_from, s_to, max(2, int(round((s_to - s_from) / spacing)) + 1))
        poses = self.poses(s)
        normal = np.stack([-np.sin(poses[:, 2]), np.cos(poses[:, 2])], axis=1)
        return poses[:, :2] + distance * normal, poses[:, 2]


@dataclass(frozen=True)
class _Profile:
    """Longitudinal motion: constant acceleration from now, constant speed before.
    Decelerations stop the vehicle for good."""
    speed: float
    accel: float = 0.0

    def distance(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        ahead = np.maximum(t, 0.0)
        if self.accel < 0:
            ahead = np.minimum(ahead, self.speed / -self.accel)
        travelled = self.speed * ahead + 0.5 * self.accel * ahead * ahead
        return np.where(t < 0, self.speed * t, travelled)


def _stop_profile(speed: float, stop_distance: float) -> _Profile:
    return _Profile(speed, -speed * speed / (2.0 * stop_distance))


@dataclass
class _Layout:
    """A scene in the road frame, which is the ego frame at the current step."""
    path: _Path
    profile: _Profile
    road: List[Polygon]
    centerlines: List[Centerline]
    edges: List[np.ndarray]
    agents: List[Agent] = field(default_factory=list)
    lights: List[TrafficLight] = field(default_factory=list)
    tags: Set[str] = field(default_factory=set)
    lateral: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def ego_poses(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.lateral is None:
            return self.path.poses(self.profile.distance(times))
        poses = self._shifted(times)
        # Drift headings follow the tangent of the shifted path
        before = self._shifted(times - TANGENT_STEP)
        poses[:, 2] = np.arctan2(poses[:, 1] - before[:, 1], poses[:, 0] - before[:, 0])
        return poses

    def _shifted(self, times: np.ndarray) -> np.ndarray:
        poses = self.path.poses(self.profile.distance(times))
        normal = np.stack([-np.sin(poses[:, 2]), np.cos(poses[:, 2])], axis=1)
        poses[:, :2] += self.lateral(times)[:, None] * normal
        return poses


def _strip(points: np.ndarray, half_width: float) -> Polygon:
    """Flat-capped buffer around a polyline as a CCW ring."""
    geom = LineString(points).buffer(half_width, cap_style="flat", join_style="round", quad_segs=4)
    if geom.geom_type == "MultiPolygon":
        geom = max(geom.geoms, key=lambda g: g.area)
    geom = orient(geom.simplify(0.01), 1.0)
    return tuple((float(x), float(y)) for x, y in list(geom.exterior.coords)[:-1])


def _rectangle(x_min: float, y_min: float, x_max: float, y_max: float) -> Polygon:
    return ((x_min, y_min), (x_max, y_min), (x_max, y_max), (x_min, y_max))


def _lane(points: np.ndarray, headings: np.ndarray, reverse: bool = False) -> Centerline:
    if reverse:
        points = points[::-1]
        headings = normalize_angles(headings[::-1] + math.pi)
    return Centerline(
        tuple((float(x), float(y)) for x, y in points),
        tuple(float(h) for h in normalize_angles(headings))
    )


def _agent(agent_id: str, path: _Path, s0: float, speed: float, times: np.ndarray) -> Agent:
    poses = path.poses(s0 + speed * times)
    return Agent(agent_id, VEHICLE_WIDTH, VEHICLE_LENGTH, tuple(Pose2(*p) for p in poses), speed == 0.0)


def _parked(agent_id: str, x: float, y: float, yaw: float, steps: int) -> Agent:
    pose = Pose2(x, y, yaw)
    return Agent(agent_id, VEHICLE_WIDTH, VEHICLE_LENGTH, (pose,) * (steps + 1), True)


def _two_lane_layout(path: _Path, profile: _Profile) -> _Layout:
    """Road, lanes and edges of a two-lane road following `path` (oncoming lane on the left)."""
    s_end = path.end
    middle, _ = path.offset(LANE_WIDTH / 2.0, path.s[0], s_end, LANE_SPACING / 2.0)
    ego_pts, ego_hd = path.offset(0.0, path.s[0], s_end, LANE_SPACING)
    onc_pts, onc_hd = path.offset(LANE_WIDTH, path.s[0], s_end, LANE_SPACING)
    left_edge, _ = path.offset(1.5 * LANE_WIDTH, *EDGE_RANGE, EDGE_SPACING)
    right_edge, _ = path.offset(-LANE_WIDTH / 2.0, *EDGE_RANGE, EDGE_SPACING)
    return _Layout(
        path=path,
        profile=profile,
        road=[_strip(middle, LANE_WIDTH)],
        centerlines=[_lane(ego_pts, ego_hd), _lane(onc_pts, onc_hd, reverse=True)],
        edges=[left_edge, right_edge]
    )


def _oncoming_path(path: _Path) -> _Path:
    points, _ = path.offset(LANE_WIDTH, path.s[0], path.end, LANE_SPACING)
    return _Path(points[::-1])


def _straight_scene(rng: np.random.Generator, times: np.ndarray, horizon: float) -> _Layout:
    path = _Path.from_pieces([(100.0, 0.0)])
    speed = rng.uniform(4.0, 14.0)
    has_lead = rng.random() < 0.6
    accel = 0.0 if has_lead else rng.uniform(-0.8, 0.8)
    layout = _two_lane_layout(path, _Profile(speed, accel))

    if has_lead:
        gap = speed * horizon + rng.uniform(8.0, 14.0)
        layout.agents.append(_agent("lead", path, gap, max(0.0, speed + rng.uniform(-1.0, 2.0)), times))
    if rng.random() < 0.7:
        oncoming = _oncoming_path(path)
        start = oncoming.end - (BACK_LENGTH + rng.uniform(20.0, 60.0))
        layout.agents.append(_agent("oncoming", oncoming, start, rng.uniform(6.0, 12.0), times))
    return layout


def _curve_scene(rng: np.random.Generator, times: np.ndarray, horizon: float) -> _Layout:
    curvature = float(rng.choice(CURVATURES))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    speed = min(rng.uniform(5.0, 12.0), 0.9 * 2.0 / math.sqrt(curvature), 0.9 / curvature)
    lead_in = rng.uniform(0.0, 8.0)
    angle = min(0.6 * math.pi, curvature * (speed * horizon + 30.0))
    path = _Path.from_pieces([(lead_in, 0.0), (angle / curvature, sign * curvature), (BACK_LENGTH, 0.0)])
    layout = _two_lane_layout(path, _Profile(speed))

    if rng.random() < 0.5:
        gap = speed * horizon + rng.uniform(8.0, 14.0)
        layout.agents.append(_agent("lead", path, gap, speed + rng.uniform(0.0, 2.0), times))
    # No oncoming traffic on the inside of tight left bends
    if rng.random() < 0.6 and not (sign > 0 and curvature >= 0.15):
        oncoming = _oncoming_path(path)
        start = oncoming.end - (BACK_LENGTH + rng.uniform(20.0, 50.0))
        layout.agents.append(_agent("oncoming", oncoming, start, rng.uniform(5.0, 9.0), times))
    return layout


def _junction_scene(rng: np.random.Generator, times: np.ndarray, horizon: float) -> _Layout:
    x_j = rng.uniform(25.0, 40.0)
    manoeuvre = str(rng.choice(["straight", "left", "right"]))
    red = rng.random() < 0.4
    half = LANE_WIDTH / 2.0

    if manoeuvre == "left":
        radius = 9.0
        speed = rng.uniform(4.0, 5.5)
        arc_start = x_j + half - radius
        pieces = [(arc_start, 0.0), (0.5 * math.pi * radius, 1.0 / radius), (BACK_LENGTH, 0.0)]
    elif manoeuvre == "right":
        radius = 6.0
        speed = rng.uniform(3.5, 4.5)
        arc_start = x_j - half - radius
        pieces = [(arc_start, 0.0), (0.5 * math.pi * radius, -1.0 / radius), (BACK_LENGTH, 0.0)]
    else:
        radius = 0.0
        speed = rng.uniform(6.0, 12.0)
        arc_start = x_j + 60.0
        pieces = [(x_j + 60.0, 0.0)]
    path = _Path.from_pieces(pieces)

    stop_x = x_j - LANE_WIDTH - 1.5
    if red:
        stop_distance = stop_x - VEHICLE_LENGTH / 2.0 - rng.uniform(1.0, 2.0)
        speed = min(speed, math.sqrt(5.0 * stop_distance))
        profile = _stop_profile(speed, stop_distance)
    else:
        profile = _Profile(speed)

    road_end = x_j + 60.0
    road = [
        _rectangle(-BACK_LENGTH, -half, road_end, 3.0 * half),
        _rectangle(x_j - LANE_WIDTH, -50.0, x_j + LANE_WIDTH, 50.0)
    ]
    main = np.array([[-BACK_LENGTH, 0.0], [road_end, 0.0]])
    lanes = [
        _lane(main, np.zeros(2)),
        _lane(main + [0.0, LANE_WIDTH], np.zeros(2), reverse=True),
        _lane(np.array([[x_j + half, -50.0], [x_j + half, 50.0]]), np.full(2, math.pi / 2.0)),
        _lane(np.array([[x_j - half, 50.0], [x_j - half, -50.0]]), np.full(2, -math.pi / 2.0))
    ]
    if radius > 0:
        arc_end = arc_start + 0.5 * math.pi * radius
        connector, _ = path.offset(0.0, arc_start - 1.0, arc_end + 1.0, 0.5)
        road.append(_strip(connector, LANE_WIDTH / 2.0 + 0.5))
        turn_pts, turn_hd = path.offset(0.0, arc_start - 2.0, arc_end + 2.0, LANE_SPACING)
        lanes.append(_lane(turn_pts, turn_hd))

    edge_x = np.arange(EDGE_RANGE[0], x_j - LANE_WIDTH, EDGE_SPACING)
    edges = [np.column_stack([edge_x, np.full_like(edge_x, y)]) for y in (3.0 * half, -half)]

    layout = _Layout(path=path, profile=profile, road=road, centerlines=lanes, edges=edges)
    state = LightState.RED if red else LightState.GREEN
    layout.lights.append(TrafficLight(((stop_x, -half), (stop_x, half)), state))

    steps = len(times) - 1
    if red:
        north = _Path(np.array([[x_j + half, -60.0], [x_j + half, 60.0]]))
        layout.agents.append(_agent("cross-north", north, rng.uniform(35.0, 52.0), rng.uniform(7.0, 11.0), times))
        if rng.random() < 0.5:
            south = _Path(np.array([[x_j - half, 60.0], [x_j - half, -60.0]]))
            layout.agents.append(_agent("cross-south", south, rng.uniform(35.0, 52.0), rng.uniform(7.0, 11.0), times))
    else:
        if rng.random() < 0.5:
            layout.agents.append(_parked("waiting-north", x_j + half, -10.0, math.pi / 2.0, steps))
        if rng.random() < 0.5:
            layout.agents.append(_parked("waiting-south", x_j - half, 10.0, -math.pi / 2.0, steps))
        if manoeuvre == "left":
            oncoming = _Path(np.array([[x_j + 120.0, LANE_WIDTH], [-BACK_LENGTH, LANE_WIDTH]]))
            start = 120.0 - 55.0 - rng.uniform(0.0, 10.0)
            layout.agents.append(_agent("oncoming", oncoming, start, rng.uniform(7.0, 10.0), times))
            layout.tags.add(HardCaseTag.UNPROTECTED_TURN.value)

    if rng.random() < 0.35:
        y = -(half + 0.3 + VEHICLE_WIDTH / 2.0) if manoeuvre != "right" else 2.0 * LANE_WIDTH
        layout.agents.append(_parked("parked", x_j - 7.5, y, 0.0, steps))
        layout.tags.add(HardCaseTag.OCCLUDED_JUNCTION.value)
    return layout


def _violation_scene(rng: np.random.Generator, times: np.ndarray, horizon: float) -> _Layout:
    path = _Path.from_pieces([(100.0, 0.0)])
    layout = _two_lane_layout(path, _Profile(rng.uniform(6.0, 10.0)))

    def drift(t: np.ndarray) -> np.ndarray:
        phase = np.clip(t / horizon, 0.0, 1.0)
        return DRIFT_OFFSET * 0.5 * (1.0 - np.cos(math.pi * phase))

    layout.lateral = drift
    return layout


SCENE_BUILDERS = {
    "straight": _straight_scene,
    "curve": _curve_scene,
    "junction": _junction_scene,
    "violation": _violation_scene
}


def _image_polyline(points: np.ndarray, camera: CameraModel) -> Tuple[Point, ...]:
    ground = np.column_stack([points, np.zeros(len(points))])
    pixels, visible = project_points(ground, camera)
    depth = points[:, 0] - CAMERA_POSITION[0]
    keep = (
        visible & (depth > 1.0)
        & (pixels[:, 0] >= 0) & (pixels[:, 0] <= camera.width)
        & (pixels[:, 1] >= 0) & (pixels[:, 1] <= camera.height)
    )
    return tuple((float(u), float(v)) for u, v in pixels[keep])


def _obstacle_box(agent: Agent, camera: CameraModel) -> Optional[Box2D]:
    corners = footprints(agent.track_array()[:1], agent.width, agent.length)[0]
    if np.any(corners[:, 0] - CAMERA_POSITION[0] < MIN_BOX_DEPTH):
        return None
    ground = np.column_stack([corners, np.zeros(4)])
    roof = np.column_stack([corners, np.full(4, VEHICLE_HEIGHT)])
    pixels, _ = project_points(np.vstack([ground, roof]), camera)
    u_min = float(np.clip(pixels[:, 0].min(), 0, camera.width))
    u_max = float(np.clip(pixels[:, 0].max(), 0, camera.width))
    v_min = float(np.clip(pixels[:, 1].min(), 0, camera.height))
    v_max = float(np.clip(pixels[:, 1].max(), 0, camera.height))
    if u_min >= u_max or v_min >= v_max:
        return None
    return Box2D(u_min, v_min, u_max, v_max)


def _detections(layout: _Layout, camera: CameraModel) -> Detections2D:
    lines = tuple(line for line in (_image_polyline(e, camera) for e in layout.edges) if len(line) >= 2)
    boxes = tuple(box for box in (_obstacle_box(a, camera) for a in layout.agents) if box is not None)
    return Detections2D(lines, boxes)


def _to_world(origin: Pose2, layout: _Layout, scene_id: str, rng: np.random.Generator,
              horizon_steps: int, dt: float) -> Scenario:
    """Assemble the scenario, mapping every road-frame element into the world."""
    camera = default_camera()
    detections = _detections(layout, camera)

    future_t = dt * np.arange(1, horizon_steps + 1)
    history_t = dt * np.arange(-HISTORY_STEPS, 0)
    history = layout.ego_poses(history_t)
    human = layout.ego_poses(future_t)

    prev_plan = None
    if rng.random() < 0.5:
        previous = Pose2(*history[-1])
        plan = poses_to_local(previous, layout.ego_poses(dt * np.arange(0, horizon_steps)))
        prev_plan = Trajectory.from_array(plan, dt)

    def world_points(points) -> Tuple[Point, ...]:
        return tuple((float(x), float(y)) for x, y in local_to_world(origin, np.asarray(points, dtype=float)))

    agents = tuple(
        Agent(a.id, a.width, a.length,
              tuple(Pose2(*p) for p in poses_to_world(origin, a.track_array())), a.is_stationary)
        for a in layout.agents
    )
    lanes = tuple(
        Centerline(world_points(lane.points),
                   tuple(float(h) for h in normalize_angles(np.asarray(lane.headings) + origin.yaw)))
        for lane in layout.centerlines
    )
    lights = tuple(TrafficLight(world_points(light.stop_line), light.state) for light in layout.lights)
    route_s = np.arange(-10.0, layout.path.end, ROUTE_SPACING)

    return Scenario(
        id=scene_id,
        ego=EgoState(origin, float(layout.profile.speed), float(layout.profile.accel), VEHICLE_WIDTH, VEHICLE_LENGTH),
        ego_history=tuple(Pose2(*p) for p in poses_to_world(origin, history)),
        agents=agents,
        drivable_area=tuple(world_points(poly) for poly in layout.road),
        centerlines=lanes,
        traffic_lights=lights,
        route=world_points(layout.path.poses(route_s)[:, :2]),
        human_trajectory=Trajectory.from_array(human, dt),
        prev_plan=prev_plan,
        camera=camera,
        detections2d=detections,
        tags=frozenset(layout.tags)
    )


def generate_scenario(
    index: int,
    seed: int = Constants.DEFAULT_SEED,
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS,
    dt: float = Constants.DEFAULT_DT
) -> Scenario:
    """Build scene number `index`; the kind cycles through SCENE_KINDS.

    Args:
        index (int): Position in the dataset, also fixes the scene kind.
        seed (int, optional): Dataset seed.
            Defaults to Constants.DEFAULT_SEED.
        horizon_steps (int, optional): T.
            Defaults to Constants.DEFAULT_HORIZON_STEPS.
        dt (float, optional): Step in seconds.
            Defaults to Constants.DEFAULT_DT.

    Returns:
        Scenario: The scene, deterministic in (index, seed, horizon_steps, dt).
    """
    rng = np.random.default_rng([seed, index])
    kind = SCENE_KINDS[index % len(SCENE_KINDS)]
    times = dt * np.arange(0, horizon_steps + 1)
    horizon = dt * horizon_steps

    layout = SCENE_BUILDERS[kind](rng, times, horizon)
    origin = Pose2(rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0), rng.uniform(-math.pi, math.pi))
    scenario = _to_world(origin, layout, f"scene_{index:04d}", rng, horizon_steps, dt)
    LOGGER.debug(f"Generated {kind} scenario {scenario.id} with {len(scenario.agents)} agents")
    return scenario


def generate_dataset(count: int, seed: int = Constants.DEFAULT_SEED,
                     horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS,
                     dt: float = Constants.DEFAULT_DT) -> List[Scenario]:
    return [generate_scenario(i, seed, horizon_steps, dt) for i in range(count)]


def write_dataset(out_dir: Union[str, Path], count: int, seed: int, config: Config = Config()) -> List[Path]:
    """Generate `count` scenarios and save them as JSON files in `out_dir`."""
    if count < 0:
        raise InvalidSettingValue(f"Scenario count must not be negative, got {count}")
    folder = Path(out_dir)
    if not ensure_dir_exists(folder):
        raise OutputFolderError(f"Could not create dataset folder {folder}")
    paths = []
    for scenario in generate_dataset(count, seed, config.horizon_steps, config.dt):
        path = folder / f"{scenario.id}{Constants.SCENARIO_SUFFIX}"
        save_scenario(scenario, path)
        paths.append(path)
    LOGGER.info(f"Wrote {len(paths)} synthetic scenarios to {folder}")
    return paths

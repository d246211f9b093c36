#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Reading and writing scenario files (one JSON document per scenario).
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from shapely.geometry import LinearRing

from backend.base.custom_exceptions import ScenarioParseError, ScenarioValidationError
from backend.base.definitions import Constants, LightState
from backend.base.helpers import write_json
from backend.base.logging import LOGGER
from backend.features.scene.geometry import headings_from_positions, polygon_area
from backend.features.scene.types import (Agent, Box2D, CameraModel, Centerline,
                                          Detections2D, EgoState, Polygon,
                                          Pose2, Scenario, TrafficLight,
                                          Trajectory)


class _Reader:
    """Typed access to a decoded document that reports field paths on failure."""

    def __init__(self, source: Optional[str]):
        self.source = source

    def fail(self, path: str, message: str) -> None:
        raise ScenarioValidationError(path, message, self.source)

    def get(self, data: Dict[str, Any], key: str, path: str, default: Any = ...) -> Any:
        if not isinstance(data, dict):
            self.fail(path, "must be an object")
        if key not in data:
            if default is ...:
                self.fail(f"{path}.{key}" if path else key, "is missing")
            return default
        return data[key]

    def number(self, value: Any, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"must be a number, got {value!r}")
        if not math.isfinite(value):
            self.fail(path, "must be finite")
        return float(value)

    def positive(self, value: Any, path: str) -> float:
        number = self.number(value, path)
        if number <= 0:
            self.fail(path, f"must be positive, got {number}")
        return number

    def array(self, value: Any, path: str, min_len: int = 0) -> List[Any]:
        if not isinstance(value, list):
            self.fail(path, "must be a list")
        if len(value) < min_len:
            self.fail(path, f"needs at least {min_len} entries, got {len(value)}")
        return value

    def point_rows(self, value: Any, path: str, min_len: int = 0) -> np.ndarray:
        """Rows of [x, y] or [x, y, angle]; missing angles become NaN."""
        rows = self.array(value, path, min_len)
        out = np.full((len(rows), 3), np.nan)
        width = None
        for i, row in enumerate(rows):
            row_path = f"{path}[{i}]"
            if not isinstance(row, list) or len(row) not in (2, 3):
                self.fail(row_path, "must be [x, y] or [x, y, yaw]")
            if width is None:
                width = len(row)
            elif len(row) != width:
                self.fail(row_path, "mixes entries with and without yaw")
            for j, v in enumerate(row):
                out[i, j] = self.number(v, f"{row_path}[{j}]")
        return out


def _poses_from_rows(rows: np.ndarray, origin: Optional[Tuple[float, float]]) -> Tuple[Pose2, ...]:
    if len(rows) and np.isnan(rows[0, 2]):
        rows = rows.copy()
        rows[:, 2] = headings_from_positions(rows[:, :2], origin)
    return tuple(Pose2(*row) for row in rows)


def _read_trajectory(r: _Reader, value: Any, path: str, horizon_steps: int) -> Trajectory:
    dt = r.positive(r.get(value, "dt", path, Constants.DEFAULT_DT), f"{path}.dt")
    rows = r.point_rows(r.get(value, "poses", path), f"{path}.poses")
    if len(rows) != horizon_steps:
        r.fail(f"{path}.poses", f"must have {horizon_steps} poses, got {len(rows)}")
    return Trajectory(_poses_from_rows(rows, (0.0, 0.0)), dt)


def _read_polygon(r: _Reader, value: Any, path: str) -> Polygon:
    rows = r.point_rows(value, path, 3)[:, :2]
    if len(rows) > 3 and np.array_equal(rows[0], rows[-1]):
        rows = rows[:-1]
    area = polygon_area(rows)
    if len(rows) < 3 or abs(area) <= 1e-9:
        r.fail(path, "polygon is degenerate")
    if not LinearRing(rows).is_simple:
        r.fail(path, "polygon is not simple")
    if area < 0:
        rows = rows[::-1]
    return tuple((float(x), float(y)) for x, y in rows)


def _read_camera(r: _Reader, value: Any) -> CameraModel:
    path = "camera"
    fx = r.positive(r.get(value, "fx", path), f"{path}.fx")
    fy = r.positive(r.get(value, "fy", path), f"{path}.fy")
    cx = r.number(r.get(value, "cx", path), f"{path}.cx")
    cy = r.number(r.get(value, "cy", path), f"{path}.cy")

    dims = []
    for key in ("width", "height"):
        v = r.get(value, key, path)
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            r.fail(f"{path}.{key}", f"must be a positive integer, got {v!r}")
        dims.append(v)

    rot_raw = r.array(r.get(value, "rotation", path), f"{path}.rotation")
    if len(rot_raw) != 3:
        r.fail(f"{path}.rotation", "must be a 3x3 matrix")
    rotation = []
    for i, row in enumerate(rot_raw):
        row = r.array(row, f"{path}.rotation[{i}]")
        if len(row) != 3:
            r.fail(f"{path}.rotation[{i}]", "must have 3 entries")
        rotation.append(tuple(r.number(v, f"{path}.rotation[{i}][{j}]") for j, v in enumerate(row)))
    matrix = np.array(rotation)
    if not np.allclose(matrix @ matrix.T, np.eye(3), atol=1e-6) or np.linalg.det(matrix) <= 0:
        r.fail(f"{path}.rotation", "must be a proper rotation matrix")

    trans_raw = r.array(r.get(value, "translation", path), f"{path}.translation")
    if len(trans_raw) != 3:
        r.fail(f"{path}.translation", "must have 3 entries")
    translation = tuple(r.number(v, f"{path}.translation[{j}]") for j, v in enumerate(trans_raw))

    return CameraModel(fx, fy, cx, cy, dims[0], dims[1], tuple(rotation), translation)


def _clamp(value: float, upper: float) -> float:
    return min(max(value, 0.0), float(upper))


def _read_detections(r: _Reader, value: Any, camera: CameraModel) -> Detections2D:
    path = "detections2d"
    if value is None:
        return Detections2D()

    lines = []
    for i, line in enumerate(r.array(r.get(value, "lane_lines", path, []), f"{path}.lane_lines")):
        rows = r.point_rows(line, f"{path}.lane_lines[{i}]", 1)
        lines.append(tuple(
            (_clamp(u, camera.width), _clamp(v, camera.height)) for u, v in rows[:, :2]
        ))

    boxes = []
    for i, box in enumerate(r.array(r.get(value, "obstacles", path, []), f"{path}.obstacles")):
        box_path = f"{path}.obstacles[{i}]"
        box = r.array(box, box_path)
        if len(box) != 4:
            r.fail(box_path, "must be [u_min, v_min, u_max, v_max]")
        u0, v0, u1, v1 = (r.number(v, f"{box_path}[{j}]") for j, v in enumerate(box))
        if u0 > u1 or v0 > v1:
            r.fail(box_path, "min corner must not exceed max corner")
        boxes.append(Box2D(
            _clamp(u0, camera.width), _clamp(v0, camera.height),
            _clamp(u1, camera.width), _clamp(v1, camera.height)
        ))

    return Detections2D(tuple(lines), tuple(boxes))


def scenario_from_dict(
    data: Any,
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS,
    source: Optional[str] = None,
    default_id: str = "scenario"
) -> Scenario:
    """Validate a decoded scenario document.

    Args:
        data (Any): The decoded JSON document.
        horizon_steps (int, optional): Required trajectory length T.
            Defaults to Constants.DEFAULT_HORIZON_STEPS.
        source (Optional[str], optional): Where the document came from, for messages.
            Defaults to None.
        default_id (str, optional): Id used when the document has none.
            Defaults to "scenario".

    Raises:
        ScenarioValidationError: An invariant does not hold.

    Returns:
        Scenario: The validated scenario.
    """
    r = _Reader(source)
    if not isinstance(data, dict):
        r.fail("$", "scenario must be a JSON object")

    scenario_id = r.get(data, "id", "", default_id)
    if not isinstance(scenario_id, str) or not scenario_id:
        r.fail("id", "must be a non-empty string")

    # Ego
    ego_raw = r.get(data, "ego", "")
    pose_row = r.point_rows([r.get(ego_raw, "pose", "ego")], "ego.pose")[0]
    if np.isnan(pose_row[2]):
        pose_row[2] = 0.0
    speed = r.number(r.get(ego_raw, "speed", "ego"), "ego.speed")
    if speed < 0:
        r.fail("ego.speed", f"must be non-negative, got {speed}")
    ego = EgoState(
        pose=Pose2(*pose_row),
        speed=speed,
        accel=r.number(r.get(ego_raw, "accel", "ego", 0.0), "ego.accel"),
        width=r.positive(r.get(ego_raw, "width", "ego"), "ego.width"),
        length=r.positive(r.get(ego_raw, "length", "ego"), "ego.length")
    )

    history_rows = r.point_rows(r.get(data, "ego_history", "", []), "ego_history")
    if len(history_rows) and np.isnan(history_rows[0, 2]):
        chained = np.vstack([history_rows[:, :2], pose_row[None, :2]])
        history_rows = history_rows.copy()
        history_rows[:, 2] = headings_from_positions(chained, None)[:-1]
    ego_history = tuple(Pose2(*row) for row in history_rows)

    # Agents
    agents = []
    seen_ids = set()
    for i, raw in enumerate(r.array(r.get(data, "agents", "", []), "agents")):
        path = f"agents[{i}]"
        agent_id = str(r.get(raw, "id", path, str(i)))
        if agent_id in seen_ids:
            r.fail(f"{path}.id", f"duplicate agent id {agent_id}")
        seen_ids.add(agent_id)
        rows = r.point_rows(r.get(raw, "track", path), f"{path}.track")
        if len(rows) != horizon_steps + 1:
            r.fail(f"{path}.track", f"must have {horizon_steps + 1} poses, got {len(rows)}")
        stationary = r.get(raw, "is_stationary", path, False)
        if not isinstance(stationary, bool):
            r.fail(f"{path}.is_stationary", "must be true or false")
        agents.append(Agent(
            id=agent_id,
            width=r.positive(r.get(raw, "width", path), f"{path}.width"),
            length=r.positive(r.get(raw, "length", path), f"{path}.length"),
            track=_poses_from_rows(rows, None),
            is_stationary=stationary
        ))

    drivable = tuple(
        _read_polygon(r, poly, f"drivable_area[{i}]")
        for i, poly in enumerate(r.array(r.get(data, "drivable_area", ""), "drivable_area"))
    )

    centerlines = []
    for i, raw in enumerate(r.array(r.get(data, "centerlines", "", []), "centerlines")):
        rows = r.point_rows(raw, f"centerlines[{i}]", 1)
        if np.isnan(rows[0, 2]):
            rows = rows.copy()
            rows[:, 2] = headings_from_positions(rows[:, :2], None)
            if len(rows) > 1:
                rows[-1, 2] = rows[-2, 2]
        poses = [Pose2(*row) for row in rows]
        centerlines.append(Centerline(
            tuple((p.x, p.y) for p in poses), tuple(p.yaw for p in poses)
        ))

    lights = []
    for i, raw in enumerate(r.array(r.get(data, "traffic_lights", "", []), "traffic_lights")):
        path = f"traffic_lights[{i}]"
        line = r.point_rows(r.get(raw, "stop_line", path), f"{path}.stop_line")
        if len(line) != 2:
            r.fail(f"{path}.stop_line", "must have exactly 2 points")
        state = r.get(raw, "state", path)
        try:
            light_state = LightState(state)
        except ValueError:
            r.fail(f"{path}.state", f"must be 'red' or 'green', got {state!r}")
        lights.append(TrafficLight(
            ((float(line[0, 0]), float(line[0, 1])), (float(line[1, 0]), float(line[1, 1]))),
            light_state
        ))

    route_rows = r.point_rows(r.get(data, "route", ""), "route", 1)
    route = tuple((float(x), float(y)) for x, y in route_rows[:, :2])

    human = _read_trajectory(r, r.get(data, "human_trajectory", ""), "human_trajectory", horizon_steps)
    prev_raw = r.get(data, "prev_plan", "", None)
    prev_plan = (
        _read_trajectory(r, prev_raw, "prev_plan", horizon_steps)
        if prev_raw is not None else None
    )

    camera = _read_camera(r, r.get(data, "camera", ""))
    detections = _read_detections(r, r.get(data, "detections2d", "", None), camera)

    tags_raw = r.array(r.get(data, "tags", "", []), "tags")
    for i, tag in enumerate(tags_raw):
        if not isinstance(tag, str):
            r.fail(f"tags[{i}]", "must be a string")

    return Scenario(
        id=scenario_id,
        ego=ego,
        ego_history=ego_history,
        agents=tuple(agents),
        drivable_area=drivable,
        centerlines=tuple(centerlines),
        traffic_lights=tuple(lights),
        route=route,
        human_trajectory=human,
        prev_plan=prev_plan,
        camera=camera,
        detections2d=detections,
        tags=frozenset(tags_raw)
    )


def load_scenario(
    path: Union[str, Path],
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS
) -> Scenario:
    """Load and validate one scenario file.

    Args:
        path (Union[str, Path]): The scenario file.
        horizon_steps (int, optional): Required trajectory length T.
            Defaults to Constants.DEFAULT_HORIZON_STEPS.

    Raises:
        ScenarioParseError: The file is not valid JSON.
        ScenarioValidationError: An invariant does not hold.

    Returns:
        Scenario: The validated scenario.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ScenarioParseError(f"{path}: not valid JSON ({e})")
    except OSError as e:
        raise ScenarioParseError(f"{path}: could not be read ({e})")

    scenario = scenario_from_dict(data, horizon_steps, str(path), path.stem)
    LOGGER.debug(f"Loaded scenario {scenario.id} from {path}")
    return scenario


def _pose_rows(poses: Sequence[Pose2]) -> List[List[float]]:
    return [[p.x, p.y, p.yaw] for p in poses]


def trajectory_to_dict(trajectory: Trajectory) -> Dict[str, Any]:
    return {"dt": trajectory.dt, "poses": _pose_rows(trajectory.poses)}


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Encode a scenario with the file schema read by `scenario_from_dict`."""
    ego = scenario.ego
    return {
        "id": scenario.id,
        "ego": {
            "pose": [ego.pose.x, ego.pose.y, ego.pose.yaw],
            "speed": ego.speed,
            "accel": ego.accel,
            "width": ego.width,
            "length": ego.length
        },
        "ego_history": _pose_rows(scenario.ego_history),
        "agents": [
            {
                "id": agent.id,
                "width": agent.width,
                "length": agent.length,
                "track": _pose_rows(agent.track),
                "is_stationary": agent.is_stationary
            }
            for agent in scenario.agents
        ],
        "drivable_area": [[list(p) for p in poly] for poly in scenario.drivable_area],
        "centerlines": [
            [[x, y, h] for (x, y), h in zip(lane.points, lane.headings)]
            for lane in scenario.centerlines
        ],
        "traffic_lights": [
            {"stop_line": [list(p) for p in light.stop_line], "state": light.state.value}
            for light in scenario.traffic_lights
        ],
        "route": [list(p) for p in scenario.route],
        "human_trajectory": trajectory_to_dict(scenario.human_trajectory),
        "prev_plan": trajectory_to_dict(scenario.prev_plan) if scenario.prev_plan else None,
        "camera": {
            "fx": scenario.camera.fx,
            "fy": scenario.camera.fy,
            "cx": scenario.camera.cx,
            "cy": scenario.camera.cy,
            "width": scenario.camera.width,
            "height": scenario.camera.height,
            "rotation": [list(row) for row in scenario.camera.rotation],
            "translation": list(scenario.camera.translation)
        },
        "detections2d": {
            "lane_lines": [[list(p) for p in line] for line in scenario.detections2d.lane_lines],
            "obstacles": [
                [b.u_min, b.v_min, b.u_max, b.v_max] for b in scenario.detections2d.obstacles
            ]
        },
        "tags": sorted(scenario.tags)
    }


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    """Write a scenario file; loading it back gives an equal Scenario."""
    write_json(path, scenario_to_dict(scenario))
    LOGGER.debug(f"Saved scenario {scenario.id} to {path}")

#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Geometry primitives shared by rendering, evaluation and post-processing.
"""

import math
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LineString
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.ops import unary_union

from backend.features.scene.types import (CameraModel, Centerline, Point,
                                          Polygon, Pose2, normalize_angles)

QUERY_CHUNK = 2048
MIN_DEPTH = 1e-6


def rotation(yaw: float) -> np.ndarray:
    """2x2 rotation matrix for a yaw angle."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def local_to_world(pose: Pose2, points: np.ndarray) -> np.ndarray:
    """Map (n, 2) points from the frame of `pose` to the world frame."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return points @ rotation(pose.yaw).T + np.array([pose.x, pose.y])


def world_to_local(pose: Pose2, points: np.ndarray) -> np.ndarray:
    """Map (n, 2) world points into the frame of `pose`."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return (points - np.array([pose.x, pose.y])) @ rotation(pose.yaw)


def poses_to_world(pose: Pose2, poses: np.ndarray) -> np.ndarray:
    """Map (n, 3) ego-frame poses into the world frame."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    out = np.empty_like(poses)
    out[:, :2] = local_to_world(pose, poses[:, :2])
    out[:, 2] = normalize_angles(poses[:, 2] + pose.yaw)
    return out


def poses_to_local(pose: Pose2, poses: np.ndarray) -> np.ndarray:
    """Map (n, 3) world poses into the frame of `pose`."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    out = np.empty_like(poses)
    out[:, :2] = world_to_local(pose, poses[:, :2])
    out[:, 2] = normalize_angles(poses[:, 2] - pose.yaw)
    return out


def ego_footprint(pose: Pose2, width: float, length: float) -> np.ndarray:
    """Oriented rectangle of a vehicle centred on `pose`.

    Args:
        pose (Pose2): Centre and heading of the vehicle.
        width (float): Lateral extent in meters.
        length (float): Longitudinal extent in meters.

    Returns:
        np.ndarray: The (4, 2) corners in counter-clockwise order.
    """
    hl, hw = length / 2.0, width / 2.0
    corners = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    return local_to_world(pose, corners)


def footprints(poses: np.ndarray, width: float, length: float) -> np.ndarray:
    """Vectorised `ego_footprint` over (n, 3) poses, giving (n, 4, 2)."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    x = c[:, None] * local[None, :, 0] - s[:, None] * local[None, :, 1]
    y = s[:, None] * local[None, :, 0] + c[:, None] * local[None, :, 1]
    return np.stack([x + poses[:, None, 0], y + poses[:, None, 1]], axis=-1)


def _project(corners: np.ndarray, axis: np.ndarray) -> Tuple[float, float]:
    projections = corners @ axis
    return projections.min(), projections.max()


def obb_intersects(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating axis test for two oriented rectangles.

    Touching rectangles count as intersecting.

    Args:
        a (np.ndarray): (4, 2) corners of the first rectangle.
        b (np.ndarray): (4, 2) corners of the second rectangle.

    Returns:
        bool: True when the rectangles overlap or touch.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for corners in (a, b):
        for i in range(2):
            edge = corners[(i + 1) % 4] - corners[i]
            norm = math.hypot(edge[0], edge[1])
            if norm == 0.0:
                continue
            axis = np.array([-edge[1], edge[0]]) / norm
            min_a, max_a = _project(a, axis)
            min_b, max_b = _project(b, axis)
            if max_a < min_b or max_b < min_a:
                return False
    return True


def polygon_area(points: Sequence[Point]) -> float:
    """Signed shoelace area; positive for counter-clockwise rings."""
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@lru_cache(maxsize=512)
def drivable_union(drivable_area: Tuple[Polygon, ...]):
    """Union of the drivable polygons, prepared for repeated queries."""
    geom = unary_union([ShapelyPolygon(poly) for poly in drivable_area])
    shapely.prepare(geom)
    return geom


def point_in_drivable(point: Sequence[float], drivable_area: Tuple[Polygon, ...]) -> bool:
    """Closed-set containment in the union of the drivable polygons."""
    if not drivable_area:
        return False
    return bool(shapely.covers(drivable_union(drivable_area), shapely.points(point[0], point[1])))


def points_in_drivable(points: np.ndarray, drivable_area: Tuple[Polygon, ...]) -> np.ndarray:
    """Vectorised `point_in_drivable` over (..., 2) points."""
    points = np.asarray(points, dtype=float)
    if not drivable_area:
        return np.zeros(points.shape[:-1], dtype=bool)
    flat = points.reshape(-1, 2)
    inside = shapely.covers(drivable_union(drivable_area), shapely.points(flat))
    return np.asarray(inside, dtype=bool).reshape(points.shape[:-1])


def headings_from_positions(positions: np.ndarray, origin: Optional[Sequence[float]] = (0.0, 0.0)) -> np.ndarray:
    """Derive headings from consecutive positions.

    With an origin, step i uses the displacement from the previous point
    (the origin for the first step); without one, forward differences are
    used and the last point repeats the previous heading. Zero-length
    displacements keep the previous heading, starting from 0.

    Args:
        positions (np.ndarray): (n, 2) positions.
        origin (Optional[Sequence[float]], optional): Point preceding the
        first position.
            Defaults to (0.0, 0.0).

    Returns:
        np.ndarray: (n,) headings in (-pi, pi].
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(positions)
    headings = np.zeros(n)
    if n == 0:
        return headings

    if origin is not None:
        prev = np.vstack([np.asarray(origin, dtype=float).reshape(1, 2), positions[:-1]])
        deltas = positions - prev
    else:
        deltas = np.vstack([positions[1:] - positions[:-1], np.zeros((1, 2))]) if n > 1 else np.zeros((1, 2))

    last = 0.0
    for i in range(n):
        dx, dy = deltas[i]
        if dx == 0.0 and dy == 0.0:
            headings[i] = last
        else:
            last = math.atan2(dy, dx)
            headings[i] = last
    return normalize_angles(headings)


class CenterlineQuery(NamedTuple):
    """Nearest-centreline lookup results, one entry per query point."""
    distance: np.ndarray
    heading: np.ndarray
    lateral: np.ndarray


def nearest_centerline(points: np.ndarray, centerlines: Sequence[Centerline]) -> Optional[CenterlineQuery]:
    """Find the nearest centreline segment for every point.

    Args:
        points (np.ndarray): (n, 2) query points in the centreline frame.
        centerlines (Sequence[Centerline]): The lanes.

    Returns:
        Optional[CenterlineQuery]: Distance, lane direction and signed
        lateral offset (positive to the left of the lane); None without lanes.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if not centerlines:
        return None

    starts, ends, head_start, head_end = [], [], [], []
    for lane in centerlines:
        pts = lane.array()
        hds = np.asarray(lane.headings, dtype=float)
        if len(pts) == 1:
            starts.append(pts)
            ends.append(pts)
            head_start.append(hds)
            head_end.append(hds)
            continue
        starts.append(pts[:-1])
        ends.append(pts[1:])
        head_start.append(hds[:-1])
        head_end.append(hds[1:])

    a = np.vstack(starts)
    b = np.vstack(ends)
    h0 = np.concatenate(head_start)
    h1 = np.concatenate(head_end)
    d = b - a
    length_sq = np.einsum("sk,sk->s", d, d)
    safe = np.where(length_sq > 0, length_sq, 1.0)

    distance = np.empty(len(points))
    heading = np.empty(len(points))
    lateral = np.empty(len(points))
    for lo in range(0, len(points), QUERY_CHUNK):
        chunk = points[lo:lo + QUERY_CHUNK]
        rel = chunk[:, None, :] - a[None, :, :]
        t = np.where(length_sq > 0, np.einsum("nsk,sk->ns", rel, d) / safe, 0.0)
        t = np.clip(t, 0.0, 1.0)
        offset = rel - t[..., None] * d[None, :, :]
        dist = np.hypot(offset[..., 0], offset[..., 1])

        best = np.argmin(dist, axis=1)
        rows = np.arange(len(chunk))
        hd = np.where(t[rows, best] <= 0.5, h0[best], h1[best])
        off = offset[rows, best]
        sign = np.sign(np.cos(hd) * off[:, 1] - np.sin(hd) * off[:, 0])
        sign[sign == 0] = 1.0

        distance[lo:lo + len(chunk)] = dist[rows, best]
        heading[lo:lo + len(chunk)] = hd
        lateral[lo:lo + len(chunk)] = sign * dist[rows, best]
    return CenterlineQuery(distance=distance, heading=heading, lateral=lateral)


def route_progress(route: Tuple[Point, ...], points: np.ndarray) -> np.ndarray:
    """Arc-length position of the projection of each point onto the route."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(route) < 2:
        return np.zeros(len(points))
    line = _route_line(route)
    return np.asarray(shapely.line_locate_point(line, shapely.points(points)), dtype=float)


@lru_cache(maxsize=512)
def _route_line(route: Tuple[Point, ...]) -> LineString:
    return LineString(route)


def polyline_length(points: np.ndarray, origin: Optional[Sequence[float]] = (0.0, 0.0)) -> float:
    """Total 2D arc length, optionally starting from an origin point."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if origin is not None:
        points = np.vstack([np.asarray(origin, dtype=float).reshape(1, 2), points])
    if len(points) < 2:
        return 0.0
    steps = np.diff(points, axis=0)
    return float(np.sum(np.hypot(steps[:, 0], steps[:, 1])))


def project_points(points: np.ndarray, camera: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of (n, 3) ego-frame points.

    Points at or behind the image plane are flagged invisible; their
    pixels stay finite.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (n, 2) pixels and the visibility flags.
    """
    cam = np.asarray(points, dtype=float).reshape(-1, 3) @ camera.rotation_matrix().T + camera.translation_vector()
    depth = cam[:, 2]
    visible = depth > MIN_DEPTH
    safe = np.where(visible, depth, MIN_DEPTH)
    u = camera.fx * cam[:, 0] / safe + camera.cx
    v = camera.fy * cam[:, 1] / safe + camera.cy
    return np.stack([u, v], axis=1), visible

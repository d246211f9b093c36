#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Bird's-eye-view feature grid rendered from scene geometry, the sampler
that reads it along a trajectory and the GridMask augmentation.

Grid layout: ego at the centre, row 0 is the far front (+x) and column 0
the far left (+y). Channels:
    0 drivable mask
    1 signed distance to the drivable boundary (positive inside), /8 m
    2 distance to the nearest centreline, /4 m
    3 cos and 4 sin of the nearest lane direction, in the ego frame
    5 agent occupancy now
    6 agent occupancy over the future tracks
    7 red stop lines
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import shapely

from backend.base.custom_exceptions import InvalidBevGridError, ShapeMismatchError
from backend.base.definitions import Constants, LightState
from backend.features.scene.geometry import (drivable_union, local_to_world,
                                             nearest_centerline,
                                             points_in_drivable)
from backend.features.scene.types import Scenario, Trajectory, normalize_angles

BOUNDARY_CLAMP = 8.0
CENTERLINE_CLAMP = 4.0


@dataclass(frozen=True, eq=False)
class BevGrid:
    """C x H x W feature map over a square `extent` meters wide."""
    data: np.ndarray
    extent: float = Constants.DEFAULT_BEV_EXTENT

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise ShapeMismatchError(f"BEV data must be C x H x H, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidBevGridError("BEV values must be finite")
        if self.extent <= 0:
            raise InvalidBevGridError(f"BEV extent must be positive, got {self.extent}")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def resolution(self) -> int:
        return self.data.shape[1]

    @property
    def cell_size(self) -> float:
        return self.extent / self.resolution


def cell_centers(extent: float, resolution: int) -> np.ndarray:
    """Ego-frame (x, y) of every cell centre, shape (H, W, 2)."""
    size = extent / resolution
    idx = np.arange(resolution) + 0.5
    xs = extent / 2.0 - idx * size
    ys = extent / 2.0 - idx * size
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([grid_x, grid_y], axis=-1)


def _occupancy(points: np.ndarray, poses: np.ndarray, width: float, length: float) -> np.ndarray:
    """Cells whose centre lies in (or on) a rectangle at any of the poses."""
    occupied = np.zeros(points.shape[0], dtype=bool)
    for x, y, yaw in poses:
        c, s = math.cos(yaw), math.sin(yaw)
        dx = points[:, 0] - x
        dy = points[:, 1] - y
        lon = c * dx + s * dy
        lat = -s * dx + c * dy
        occupied |= (np.abs(lon) <= length / 2.0) & (np.abs(lat) <= width / 2.0)
    return occupied


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    length_sq = float(d @ d)
    if length_sq == 0.0:
        return np.hypot(points[:, 0] - a[0], points[:, 1] - a[1])
    t = np.clip(((points - a) @ d) / length_sq, 0.0, 1.0)
    closest = a + t[:, None] * d
    return np.hypot(points[:, 0] - closest[:, 0], points[:, 1] - closest[:, 1])


def render_bev(
    scenario: Scenario,
    extent: float = Constants.DEFAULT_BEV_EXTENT,
    resolution: int = Constants.DEFAULT_BEV_RESOLUTION
) -> BevGrid:
    """Render the feature grid around the ego vehicle.

    Args:
        scenario (Scenario): The scene.
        extent (float, optional): Side length in meters.
            Defaults to Constants.DEFAULT_BEV_EXTENT.
        resolution (int, optional): Cells per side.
            Defaults to Constants.DEFAULT_BEV_RESOLUTION.

    Returns:
        BevGrid: The rendered grid.
    """
    h = w = resolution
    local = cell_centers(extent, resolution).reshape(-1, 2)
    world = local_to_world(scenario.ego.pose, local)
    data = np.zeros((Constants.BEV_CHANNELS, h * w))

    if scenario.drivable_area:
        data[0] = points_in_drivable(world, scenario.drivable_area)
        union = drivable_union(scenario.drivable_area)
        distance = shapely.distance(union.boundary, shapely.points(world))
        signed = np.where(data[0] > 0, distance, -distance)
        data[1] = np.clip(signed, -BOUNDARY_CLAMP, BOUNDARY_CLAMP) / BOUNDARY_CLAMP
    else:
        data[1] = -1.0

    lanes = nearest_centerline(world, scenario.centerlines)
    if lanes is None:
        data[2] = 1.0
    else:
        data[2] = np.minimum(lanes.distance, CENTERLINE_CLAMP) / CENTERLINE_CLAMP
        relative = normalize_angles(lanes.heading - scenario.ego.pose.yaw)
        data[3] = np.cos(relative)
        data[4] = np.sin(relative)

    for agent in scenario.agents:
        track = agent.track_array()
        data[5] = np.maximum(data[5], _occupancy(world, track[:1], agent.width, agent.length))
        if len(track) > 1:
            data[6] = np.maximum(data[6], _occupancy(world, track[1:], agent.width, agent.length))

    half_diag = extent / resolution * math.sqrt(2.0) / 2.0
    for light in scenario.traffic_lights:
        if light.state is not LightState.RED:
            continue
        a, b = (np.asarray(p, dtype=float) for p in light.stop_line)
        data[7] = np.maximum(data[7], _segment_distance(world, a, b) <= half_diag)

    return BevGrid(data.reshape(Constants.BEV_CHANNELS, h, w), extent)


def sample_positions(grid: BevGrid, positions: np.ndarray) -> np.ndarray:
    """Bilinear lookup at (n, 2) ego-frame positions, zero outside the grid.

    Args:
        grid (BevGrid): The grid.
        positions (np.ndarray): Query positions.

    Returns:
        np.ndarray: (n, C) feature vectors.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(positions)
    size = grid.cell_size
    half = grid.extent / 2.0
    res = grid.resolution

    row = (half - positions[:, 0]) / size - 0.5
    col = (half - positions[:, 1]) / size - 0.5
    r0 = np.floor(row).astype(int)
    c0 = np.floor(col).astype(int)
    fr = row - r0
    fc = col - c0

    inside = (np.abs(positions[:, 0]) <= half) & (np.abs(positions[:, 1]) <= half)
    out = np.zeros((n, grid.channels))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr = r0 + dr
            cc = c0 + dc
            valid = inside & (rr >= 0) & (rr < res) & (cc >= 0) & (cc < res)
            weight = np.where(valid, wr * wc, 0.0)
            values = grid.data[:, np.clip(rr, 0, res - 1), np.clip(cc, 0, res - 1)].T
            out += weight[:, None] * values
    return out


def sample_bev(grid: BevGrid, trajectory: Trajectory) -> np.ndarray:
    """One bilinear feature vector per trajectory step, shape (T, C)."""
    return sample_positions(grid, trajectory.positions())


def grid_mask(
    grid: BevGrid,
    probability: float,
    seed: int,
    block: int = Constants.DEFAULT_GRIDMASK_BLOCK,
    keep_ratio: float = Constants.DEFAULT_GRIDMASK_KEEP_RATIO
) -> BevGrid:
    """Zero a regular pattern of square blocks across all channels.

    Args:
        grid (BevGrid): The grid to augment.
        probability (float): Chance that the mask is applied at all.
        seed (int): Seed of the mask draw.
        block (int, optional): Side of a masked block in cells.
            Defaults to Constants.DEFAULT_GRIDMASK_BLOCK.
        keep_ratio (float, optional): Fraction of cells left untouched.
            Defaults to Constants.DEFAULT_GRIDMASK_KEEP_RATIO.

    Returns:
        BevGrid: The masked grid, or `grid` itself when no mask was drawn.
    """
    if probability <= 0.0:
        return grid

    rng = np.random.default_rng(seed)
    if rng.random() >= probability:
        return grid

    unit = max(block, int(round(block / math.sqrt(1.0 - keep_ratio))))
    off_r, off_c = rng.integers(0, unit, size=2)
    idx = np.arange(grid.resolution)
    rows = (idx + off_r) % unit < block
    cols = (idx + off_c) % unit < block
    mask = rows[:, None] & cols[None, :]

    data = grid.data.copy()
    data[:, mask] = 0.0
    return BevGrid(data, grid.extent)


def write_pgm(grid: BevGrid, channel: int, path: Union[str, Path], folder: Optional[Path] = None) -> Path:
    """Dump one channel as a binary 8-bit PGM image, min-max rescaled.

    Args:
        grid (BevGrid): The grid.
        channel (int): Channel index.
        path (Union[str, Path]): Target file.
        folder (Optional[Path], optional): Folder `path` is relative to.
            Defaults to None.

    Returns:
        Path: The written file.
    """
    target = Path(folder) / path if folder else Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    values = grid.data[channel]
    low, high = float(values.min()), float(values.max())
    if high > low:
        pixels = np.round((values - low) / (high - low) * 255.0)
    else:
        pixels = np.zeros_like(values)

    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    with open(target, "wb") as f:
        f.write(header)
        f.write(pixels.astype(np.uint8).tobytes())
    return target

#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Hard case mining and the upsampled training schedule.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Sequence, Union

import numpy as np

from backend.base.custom_exceptions import MissingReportError
from backend.base.definitions import Constants, HardCaseTag
from backend.base.helpers import read_json, write_json
from backend.base.logging import LOGGER
from backend.features.scene.geometry import local_to_world, nearest_centerline
from backend.features.scene.types import Scenario

# Tags that can only come from scenario annotations
ANNOTATED_TAGS = (HardCaseTag.UNPROTECTED_TURN, HardCaseTag.OCCLUDED_JUNCTION)


@dataclass(frozen=True)
class HardCaseReport:
    scenario_id: str
    tags: FrozenSet[HardCaseTag] = frozenset()
    measurements: Dict[str, float] = field(default_factory=dict, hash=False, compare=False)

    @property
    def is_hard(self) -> bool:
        return bool(self.tags)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "tags": sorted(tag.value for tag in self.tags),
            "measurements": dict(self.measurements)
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "HardCaseReport":
        return cls(
            str(data["scenario_id"]),
            frozenset(HardCaseTag(t) for t in data.get("tags", [])),
            dict(data.get("measurements", {}))
        )


def three_point_curvature(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Curvature of the circle through three points; 0 when any two coincide."""
    ab = math.dist(a, b)
    bc = math.dist(b, c)
    ca = math.dist(c, a)
    if ab * bc * ca == 0.0:
        return 0.0
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return 2.0 * abs(cross) / (ab * bc * ca)


def max_curvature(positions: np.ndarray) -> float:
    positions = np.asarray(positions, dtype=float)
    best = 0.0
    for i in range(len(positions) - 2):
        best = max(best, three_point_curvature(positions[i], positions[i + 1], positions[i + 2]))
    return best


def detect_hard_case(
    scenario: Scenario,
    curvature_threshold: float = Constants.DEFAULT_MINING_CURVATURE,
    lateral_threshold: float = Constants.DEFAULT_MINING_LATERAL_OFFSET
) -> HardCaseReport:
    """Tag a scenario from its human trajectory and its annotations.

    Args:
        scenario (Scenario): The scene.
        curvature_threshold (float, optional): Sharp curve above this, 1/m.
            Defaults to Constants.DEFAULT_MINING_CURVATURE.
        lateral_threshold (float, optional): Lane departure above this, m.
            Defaults to Constants.DEFAULT_MINING_LATERAL_OFFSET.

    Returns:
        HardCaseReport: Tags plus the measured curvature and lateral offset.
    """
    local = np.vstack([np.zeros((1, 2)), scenario.human_trajectory.positions()])
    curvature = max_curvature(local)

    lanes = nearest_centerline(local_to_world(scenario.ego.pose, local[1:]), scenario.centerlines)
    lateral = float(np.max(lanes.distance)) if lanes is not None else 0.0

    tags = set()
    if curvature > curvature_threshold:
        tags.add(HardCaseTag.SHARP_CURVE)
    if lateral > lateral_threshold:
        tags.add(HardCaseTag.LANE_DEPARTURE)
    for tag in ANNOTATED_TAGS:
        if tag.value in scenario.tags:
            tags.add(tag)

    return HardCaseReport(
        scenario.id,
        frozenset(tags),
        {"max_curvature": curvature, "max_lateral_offset": lateral}
    )


def upsample(
    scenario_ids: Sequence[str],
    reports: Mapping[str, HardCaseReport],
    factor: int = Constants.DEFAULT_UPSAMPLE_FACTOR
) -> List[str]:
    """Repeat hard scenarios `factor` times in place, others once.

    Raises:
        MissingReportError: A scenario has no report.
    """
    schedule: List[str] = []
    for sid in scenario_ids:
        if sid not in reports:
            raise MissingReportError(f"No hard case report for scenario {sid}")
        schedule.extend([sid] * (factor if reports[sid].is_hard else 1))
    return schedule


def save_reports(reports: Sequence[HardCaseReport], path: Union[str, Path]) -> None:
    write_json(path, [r.to_dict() for r in reports])
    hard = sum(1 for r in reports if r.is_hard)
    LOGGER.info(f"Saved {len(reports)} hard case reports ({hard} hard) to {path}")


def load_reports(path: Union[str, Path]) -> Dict[str, HardCaseReport]:
    return {r.scenario_id: r for r in (HardCaseReport.from_dict(d) for d in read_json(path))}

#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Scenario types, geometry primitives and scenario file handling.
"""

from .geometry import ego_footprint, obb_intersects, point_in_drivable
from .io import load_scenario, save_scenario
from .types import (Agent, Box2D, CameraModel, Centerline, Detections2D,
                    EgoState, Pose2, Scenario, TrafficLight, Trajectory)

__all__ = [
    'Agent',
    'Box2D',
    'CameraModel',
    'Centerline',
    'Detections2D',
    'EgoState',
    'Pose2',
    'Scenario',
    'TrafficLight',
    'Trajectory',
    'ego_footprint',
    'obb_intersects',
    'point_in_drivable',
    'load_scenario',
    'save_scenario'
]

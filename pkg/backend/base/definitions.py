#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from enum import Enum
from typing import NamedTuple, Tuple


class Constants:
    """Constants used throughout the application."""
    MIN_PYTHON_VERSION: Tuple[int, int] = (3, 11)
    DEFAULT_LOG_LEVEL: str = "INFO"
    DEFAULT_LOG_ROTATION: int = 5
    DEFAULT_LOG_SIZE: int = 10
    DEFAULT_LOG_NAME: str = "planloom.log"

    # Trajectories
    DEFAULT_HORIZON_STEPS: int = 8
    DEFAULT_DT: float = 0.5

    # Anchors
    DEFAULT_NUM_ANCHORS: int = 20
    DEFAULT_KMEANS_MAX_ITER: int = 100
    DEFAULT_KMEANS_TOL: float = 1e-6

    # Networks
    DEFAULT_DECODER_LAYERS: int = 2
    DEFAULT_MAX_OFFSET: float = 1.0
    DEFAULT_EMBED_DIM: int = 64
    DEFAULT_PE_DIM: int = 8
    DEFAULT_COORD_SCALE: float = 0.1

    # BEV
    DEFAULT_BEV_EXTENT: float = 64.0
    DEFAULT_BEV_RESOLUTION: int = 100
    BEV_CHANNELS: int = 8
    DEFAULT_GRIDMASK_PROBABILITY: float = 0.5
    DEFAULT_GRIDMASK_BLOCK: int = 10
    DEFAULT_GRIDMASK_KEEP_RATIO: float = 0.5

    # Metrics
    DEFAULT_STOPPED_SPEED: float = 0.1
    DEFAULT_REAR_AXLE_OFFSET: float = 1.0
    DEFAULT_TTC_HORIZON: float = 1.0
    DEFAULT_TTC_STEP: float = 0.1
    DEFAULT_DDC_MINOR: float = 2.0
    DEFAULT_DDC_MAJOR: float = 6.0
    DEFAULT_EP_MIN_PROGRESS: float = 5.0
    DEFAULT_EP_UNACHIEVABLE: float = 0.1
    DEFAULT_HC_MAX_LON_ACCEL: float = 4.0
    DEFAULT_HC_MAX_LAT_ACCEL: float = 4.0
    DEFAULT_HC_MAX_JERK: float = 8.0
    DEFAULT_HC_MAX_YAW_RATE: float = 1.0
    DEFAULT_LK_MAX_DEVIATION: float = 0.5
    DEFAULT_EC_MAX_ACCEL_DIFF: float = 2.0
    DEFAULT_METRIC_WEIGHT: float = 1.0

    # Post-processing
    DEFAULT_ENVELOPE_A_MIN: float = -3.0
    DEFAULT_ENVELOPE_A_MAX: float = 2.0

    # Mining
    DEFAULT_MINING_CURVATURE: float = 0.2
    DEFAULT_MINING_LATERAL_OFFSET: float = 1.0
    DEFAULT_UPSAMPLE_FACTOR: int = 3

    # Training
    DEFAULT_SEED: int = 0
    DEFAULT_EPOCHS: int = 30
    DEFAULT_LEARNING_RATE: float = 1e-3
    DEFAULT_WEIGHT_DECAY: float = 0.0
    DEFAULT_BATCH_SIZE: int = 4
    DEFAULT_WORKERS: int = 1

    # Files
    SCENARIO_SUFFIX: str = ".json"
    ANCHORS_FILE: str = "anchors.json"
    DECODER_CHECKPOINT: str = "decoder"
    SCORER_CHECKPOINT: str = "scorer"
    MINING_REPORT_NAME: str = "hard_cases.json"
    CANDIDATES_CSV: str = "candidates.csv"
    SUMMARY_CSV: str = "summary.csv"
    SUMMARY_JSON: str = "summary.json"
    REPORTS_FOLDER: str = "reports"


class LightState(Enum):
    """State of a traffic light."""
    RED = "red"
    GREEN = "green"


class HardCaseTag(Enum):
    """Categories of difficult scenarios."""
    UNPROTECTED_TURN = "unprotected_turn"
    OCCLUDED_JUNCTION = "occluded_junction"
    SHARP_CURVE = "sharp_curve"
    LANE_DEPARTURE = "lane_departure"


class DiscardReason(Enum):
    """Why the image-space post-selection dropped a candidate."""
    DISTANCE_ENVELOPE = "distance_envelope"
    OBSTACLE = "obstacle"
    LANE_CORRIDOR = "lane_corridor"


# Column order of the evaluation table.
METRIC_COLUMNS: Tuple[str, ...] = (
    "nc", "dac", "ddc", "tlc", "ep", "ttc", "lk", "hc", "ec", "epdms"
)


class Config(NamedTuple):
    """Every tunable of the planning stack."""
    horizon_steps: int = Constants.DEFAULT_HORIZON_STEPS
    dt: float = Constants.DEFAULT_DT
    num_anchors: int = Constants.DEFAULT_NUM_ANCHORS
    decoder_layers: int = Constants.DEFAULT_DECODER_LAYERS
    max_offset: float = Constants.DEFAULT_MAX_OFFSET
    embed_dim: int = Constants.DEFAULT_EMBED_DIM
    pe_dim: int = Constants.DEFAULT_PE_DIM
    coord_scale: float = Constants.DEFAULT_COORD_SCALE
    bev_extent: float = Constants.DEFAULT_BEV_EXTENT
    bev_resolution: int = Constants.DEFAULT_BEV_RESOLUTION
    bev_channels: int = Constants.BEV_CHANNELS
    gridmask_probability: float = Constants.DEFAULT_GRIDMASK_PROBABILITY
    gridmask_block: int = Constants.DEFAULT_GRIDMASK_BLOCK
    gridmask_keep_ratio: float = Constants.DEFAULT_GRIDMASK_KEEP_RATIO
    stopped_speed: float = Constants.DEFAULT_STOPPED_SPEED
    rear_axle_offset: float = Constants.DEFAULT_REAR_AXLE_OFFSET
    ttc_horizon: float = Constants.DEFAULT_TTC_HORIZON
    ttc_step: float = Constants.DEFAULT_TTC_STEP
    ddc_minor: float = Constants.DEFAULT_DDC_MINOR
    ddc_major: float = Constants.DEFAULT_DDC_MAJOR
    ep_min_progress: float = Constants.DEFAULT_EP_MIN_PROGRESS
    ep_unachievable: float = Constants.DEFAULT_EP_UNACHIEVABLE
    hc_max_lon_accel: float = Constants.DEFAULT_HC_MAX_LON_ACCEL
    hc_max_lat_accel: float = Constants.DEFAULT_HC_MAX_LAT_ACCEL
    hc_max_jerk: float = Constants.DEFAULT_HC_MAX_JERK
    hc_max_yaw_rate: float = Constants.DEFAULT_HC_MAX_YAW_RATE
    lk_max_deviation: float = Constants.DEFAULT_LK_MAX_DEVIATION
    ec_max_accel_diff: float = Constants.DEFAULT_EC_MAX_ACCEL_DIFF
    w_ttc: float = Constants.DEFAULT_METRIC_WEIGHT
    w_ep: float = Constants.DEFAULT_METRIC_WEIGHT
    w_hc: float = Constants.DEFAULT_METRIC_WEIGHT
    w_lk: float = Constants.DEFAULT_METRIC_WEIGHT
    w_ec: float = Constants.DEFAULT_METRIC_WEIGHT
    envelope_a_min: float = Constants.DEFAULT_ENVELOPE_A_MIN
    envelope_a_max: float = Constants.DEFAULT_ENVELOPE_A_MAX
    mining_curvature: float = Constants.DEFAULT_MINING_CURVATURE
    mining_lateral_offset: float = Constants.DEFAULT_MINING_LATERAL_OFFSET
    upsample_factor: int = Constants.DEFAULT_UPSAMPLE_FACTOR
    seed: int = Constants.DEFAULT_SEED
    epochs: int = Constants.DEFAULT_EPOCHS
    learning_rate: float = Constants.DEFAULT_LEARNING_RATE
    weight_decay: float = Constants.DEFAULT_WEIGHT_DECAY
    batch_size: int = Constants.DEFAULT_BATCH_SIZE
    kmeans_max_iter: int = Constants.DEFAULT_KMEANS_MAX_ITER
    kmeans_tol: float = Constants.DEFAULT_KMEANS_TOL
    workers: int = Constants.DEFAULT_WORKERS
    log_level: str = Constants.DEFAULT_LOG_LEVEL

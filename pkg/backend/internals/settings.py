#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from backend.base.custom_exceptions import InvalidSettingValue
from backend.base.definitions import Config, Constants
from backend.base.logging import LOGGER


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def _positive_int(value: Any) -> bool:
    return _is_int(value) and value >= 1


def _non_negative_int(value: Any) -> bool:
    return _is_int(value) and value >= 0


def _positive(value: Any) -> bool:
    return _is_number(value) and value > 0


def _non_negative(value: Any) -> bool:
    return _is_number(value) and value >= 0


def _probability(value: Any) -> bool:
    return _is_number(value) and 0 <= value <= 1


def _even_positive_int(value: Any) -> bool:
    return _positive_int(value) and value % 2 == 0


def _log_level(value: Any) -> bool:
    return isinstance(value, str) and value.upper() in (
        "DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"
    )


# key -> (check, message, coerce to float)
_RULES: Dict[str, Tuple[Callable[[Any], bool], str, bool]] = {
    "horizon_steps": (_positive_int, "must be a positive integer", False),
    "dt": (_positive, "must be a positive number", True),
    "num_anchors": (_positive_int, "must be a positive integer", False),
    "decoder_layers": (_positive_int, "must be a positive integer", False),
    "max_offset": (_positive, "must be a positive number", True),
    "embed_dim": (_positive_int, "must be a positive integer", False),
    "pe_dim": (_even_positive_int, "must be a positive even integer", False),
    "coord_scale": (_positive, "must be a positive number", True),
    "bev_extent": (_positive, "must be a positive number", True),
    "bev_resolution": (_positive_int, "must be a positive integer", False),
    "bev_channels": (lambda v: v == Constants.BEV_CHANNELS, f"must be {Constants.BEV_CHANNELS}", False),
    "gridmask_probability": (_probability, "must be a number between 0 and 1", True),
    "gridmask_block": (_positive_int, "must be a positive integer", False),
    "gridmask_keep_ratio": (lambda v: _is_number(v) and 0 <= v < 1, "must be a number in [0, 1)", True),
    "stopped_speed": (_non_negative, "must be a non-negative number", True),
    "rear_axle_offset": (_non_negative, "must be a non-negative number", True),
    "ttc_horizon": (_positive, "must be a positive number", True),
    "ttc_step": (_positive, "must be a positive number", True),
    "ddc_minor": (_non_negative, "must be a non-negative number", True),
    "ddc_major": (_non_negative, "must be a non-negative number", True),
    "ep_min_progress": (_positive, "must be a positive number", True),
    "ep_unachievable": (_non_negative, "must be a non-negative number", True),
    "hc_max_lon_accel": (_positive, "must be a positive number", True),
    "hc_max_lat_accel": (_positive, "must be a positive number", True),
    "hc_max_jerk": (_positive, "must be a positive number", True),
    "hc_max_yaw_rate": (_positive, "must be a positive number", True),
    "lk_max_deviation": (_positive, "must be a positive number", True),
    "ec_max_accel_diff": (_positive, "must be a positive number", True),
    "w_ttc": (_non_negative, "must be a non-negative number", True),
    "w_ep": (_non_negative, "must be a non-negative number", True),
    "w_hc": (_non_negative, "must be a non-negative number", True),
    "w_lk": (_non_negative, "must be a non-negative number", True),
    "w_ec": (_non_negative, "must be a non-negative number", True),
    "envelope_a_min": (_is_number, "must be a number", True),
    "envelope_a_max": (_is_number, "must be a number", True),
    "mining_curvature": (_positive, "must be a positive number", True),
    "mining_lateral_offset": (_positive, "must be a positive number", True),
    "upsample_factor": (_positive_int, "must be a positive integer", False),
    "seed": (_non_negative_int, "must be a non-negative integer", False),
    "epochs": (_non_negative_int, "must be a non-negative integer", False),
    "learning_rate": (_positive, "must be a positive number", True),
    "weight_decay": (_non_negative, "must be a non-negative number", True),
    "batch_size": (_positive_int, "must be a positive integer", False),
    "kmeans_max_iter": (_positive_int, "must be a positive integer", False),
    "kmeans_tol": (_non_negative, "must be a non-negative number", True),
    "workers": (_positive_int, "must be a positive integer", False),
    "log_level": (_log_level, "must be one of DEBUG, INFO, WARNING, ERROR, CRITICAL", False),
}


def validate_settings(values: Dict[str, Any]) -> Dict[str, Any]:
    """Validate raw setting values.

    Args:
        values (Dict[str, Any]): Setting key to raw value.

    Raises:
        InvalidSettingValue: A key is unknown or a value is invalid.

    Returns:
        Dict[str, Any]: The values, with floats coerced where needed.
    """
    validated: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in _RULES:
            raise InvalidSettingValue(f"Unknown setting: {key}")

        check, message, as_float = _RULES[key]
        if not check(value):
            raise InvalidSettingValue(f"Setting {key} {message} (got {value!r})")

        if as_float:
            value = float(value)
        elif key == "log_level":
            value = value.upper()
        validated[key] = value

    return validated


def _check_cross_field(config: Config) -> None:
    """Validate relations between settings.

    Args:
        config (Config): The merged config.

    Raises:
        InvalidSettingValue: A relation does not hold.
    """
    if config.ddc_minor > config.ddc_major:
        raise InvalidSettingValue("Setting ddc_minor must not exceed ddc_major")

    if config.envelope_a_min > config.envelope_a_max:
        raise InvalidSettingValue("Setting envelope_a_min must not exceed envelope_a_max")

    weights = (config.w_ttc, config.w_ep, config.w_hc, config.w_lk, config.w_ec)
    if sum(weights) <= 0:
        raise InvalidSettingValue("Metric weights w_ttc, w_ep, w_hc, w_lk, w_ec must not sum to zero")

    if config.ttc_step > config.ttc_horizon:
        raise InvalidSettingValue("Setting ttc_step must not exceed ttc_horizon")


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None
) -> Config:
    """Load the config file and apply flag overrides.

    Args:
        path (Optional[Union[str, Path]], optional): A flat TOML key/value file.
            Defaults to None.
        overrides (Optional[Dict[str, Any]], optional): Values given on the
        command line. None values are ignored.
            Defaults to None.

    Raises:
        InvalidSettingValue: The file is unreadable or a value is invalid.

    Returns:
        Config: The validated config.
    """
    values: Dict[str, Any] = {}

    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except FileNotFoundError:
            raise InvalidSettingValue(f"Config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise InvalidSettingValue(f"Config file {path} is not valid TOML: {e}")

        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise InvalidSettingValue(
                f"Config file must be flat key/value pairs, found tables: {', '.join(nested)}"
            )
        values.update(validate_settings(raw))
        LOGGER.info(f"Loaded {len(raw)} settings from {path}")

    if overrides:
        flag_values = {k: v for k, v in overrides.items() if v is not None}
        values.update(validate_settings(flag_values))
        for key, value in flag_values.items():
            LOGGER.debug(f"Setting {key} overridden on the command line: {value}")

    config = Config(**{**Config()._asdict(), **values})
    _check_cross_field(config)
    return config

#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Sub-metric containers, the human-fallback filter and score aggregation.
"""

from dataclasses import dataclass
from typing import Any, Dict, NamedTuple

from backend.base.custom_exceptions import InvalidSettingValue
from backend.base.definitions import Config, Constants

MULTIPLICATIVE = ("nc", "dac", "ddc", "tlc")
WEIGHTED = ("ttc", "ep", "hc", "lk", "ec")


class SubMetrics(NamedTuple):
    nc: float
    dac: float
    ddc: float
    tlc: float
    ep: float
    ttc: float
    lk: float
    hc: float
    ec: float


class MetricWeights(NamedTuple):
    w_ttc: float = Constants.DEFAULT_METRIC_WEIGHT
    w_ep: float = Constants.DEFAULT_METRIC_WEIGHT
    w_hc: float = Constants.DEFAULT_METRIC_WEIGHT
    w_lk: float = Constants.DEFAULT_METRIC_WEIGHT
    w_ec: float = Constants.DEFAULT_METRIC_WEIGHT

    @classmethod
    def from_config(cls, config: Config) -> "MetricWeights":
        return cls(config.w_ttc, config.w_ep, config.w_hc, config.w_lk, config.w_ec)

    def weight(self, metric: str) -> float:
        return getattr(self, f"w_{metric}")


def filter_metric(agent_value: float, human_value: float) -> float:
    """Full credit when the human reference also scores 0, else the agent value."""
    if human_value == 0:
        return 1.0
    return float(agent_value)


def filtered_metrics(agent: SubMetrics, human: SubMetrics) -> SubMetrics:
    return SubMetrics(*(filter_metric(a, h) for a, h in zip(agent, human)))


def aggregate_epdms(agent: SubMetrics, human: SubMetrics, weights: MetricWeights = MetricWeights()) -> float:
    """Product of the filtered penalty terms times the weighted mean of the rest.

    Args:
        agent (SubMetrics): Metrics of the evaluated trajectory.
        human (SubMetrics): Metrics of the human reference.
        weights (MetricWeights, optional): Weights of the averaged terms.
            Defaults to equal weights.

    Raises:
        InvalidSettingValue: The weights sum to zero or one is negative.

    Returns:
        float: The score in [0, 1].
    """
    if any(w < 0 for w in weights):
        raise InvalidSettingValue("Metric weights must be non-negative")
    total_weight = sum(weights)
    if total_weight <= 0:
        raise InvalidSettingValue("Metric weights must not sum to zero")

    filtered = filtered_metrics(agent, human)
    product = 1.0
    for name in MULTIPLICATIVE:
        product *= getattr(filtered, name)

    weighted = sum(weights.weight(name) * getattr(filtered, name) for name in WEIGHTED)
    return min(1.0, max(0.0, product * weighted / total_weight))


@dataclass(frozen=True)
class MetricReport:
    agent: SubMetrics
    human: SubMetrics
    filtered: SubMetrics
    epdms: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "agent": self.agent._asdict(),
            "human": self.human._asdict(),
            "filtered": self.filtered._asdict(),
            "epdms": self.epdms
        }

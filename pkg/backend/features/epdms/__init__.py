#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Closed-loop metric oracle: sub-metrics, human-fallback filter and the
aggregated score.
"""

from .metrics import (MetricReport, MetricWeights, SubMetrics,
                      aggregate_epdms, filter_metric, filtered_metrics)
from .simulation import eval_submetrics, evaluate, evaluate_many, rollout

__all__ = [
    'MetricReport',
    'MetricWeights',
    'SubMetrics',
    'aggregate_epdms',
    'eval_submetrics',
    'evaluate',
    'evaluate_many',
    'filter_metric',
    'filtered_metrics',
    'rollout'
]

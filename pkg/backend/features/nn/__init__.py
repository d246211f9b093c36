#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Minimal neural toolkit with hand-written gradients.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (MlpSpec, add_mlp, attention, attention_backward,
                     bce_with_logits, linear_backward, linear_forward,
                     mlp_backward, mlp_forward, mse, positional_encoding,
                     positional_encodings, sigmoid)
from .params import ParamStore, sgd_step

__all__ = [
    'MlpSpec',
    'ParamStore',
    'add_mlp',
    'attention',
    'attention_backward',
    'bce_with_logits',
    'linear_backward',
    'linear_forward',
    'load_checkpoint',
    'mlp_backward',
    'mlp_forward',
    'mse',
    'positional_encoding',
    'positional_encodings',
    'save_checkpoint',
    'sgd_step',
    'sigmoid'
]

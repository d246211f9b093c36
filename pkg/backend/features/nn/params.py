#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Parameter storage and the optimiser step.
"""

import math
from typing import Dict, Iterator, List, Mapping, Optional, Sequence

import numpy as np

from backend.base.custom_exceptions import InvalidSettingValue, ShapeMismatchError


class ParamStore:
    """Ordered named parameters, initialised from one seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._values: Dict[str, np.ndarray] = {}

    def add(self, name: str, shape: Sequence[int], fan_in: Optional[int] = None, zero: bool = False) -> np.ndarray:
        """Register a parameter.

        Args:
            name (str): Unique parameter name.
            shape (Sequence[int]): Parameter shape.
            fan_in (Optional[int], optional): Inputs feeding the parameter;
            values are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
                Defaults to the first dimension of `shape`.
            zero (bool, optional): Initialise with zeros instead.
                Defaults to False.

        Raises:
            KeyError: The name is already taken.

        Returns:
            np.ndarray: The new value.
        """
        if name in self._values:
            raise KeyError(f"Parameter {name} already exists")

        shape = tuple(int(s) for s in shape)
        if zero:
            value = np.zeros(shape)
        else:
            fan = fan_in if fan_in is not None else (shape[0] if shape else 1)
            bound = 1.0 / math.sqrt(max(fan, 1))
            value = self._rng.uniform(-bound, bound, size=shape)
        self._values[name] = value
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=float)
        if name in self._values and value.shape != self._values[name].shape:
            raise ShapeMismatchError(
                f"Parameter {name} has shape {self._values[name].shape}, got {value.shape}"
            )
        self._values[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> List[str]:
        return list(self._values)

    def zeros_like(self) -> Dict[str, np.ndarray]:
        """A zero gradient buffer for every parameter."""
        return {name: np.zeros_like(value) for name, value in self._values.items()}

    def copy(self) -> "ParamStore":
        clone = ParamStore(self.seed)
        for name, value in self._values.items():
            clone._values[name] = value.copy()
        return clone

    def zero_(self) -> "ParamStore":
        """Set every parameter to zero in place."""
        for name, value in self._values.items():
            self._values[name] = np.zeros_like(value)
        return self


def sgd_step(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr: float,
    weight_decay: float = 0.0
) -> ParamStore:
    """Apply p <- p - lr * (g + weight_decay * p) in place.

    Args:
        params (ParamStore): The parameters to update.
        grads (Mapping[str, np.ndarray]): Gradients by parameter name;
        missing names are left unchanged.
        lr (float): Learning rate.
        weight_decay (float, optional): L2 decay coefficient.
            Defaults to 0.0.

    Raises:
        ShapeMismatchError: A gradient has the wrong shape or an unknown name.
        InvalidSettingValue: The learning rate is not positive.

    Returns:
        ParamStore: `params`, updated.
    """
    if not lr > 0:
        raise InvalidSettingValue(f"Learning rate must be positive, got {lr}")

    for name, grad in grads.items():
        if name not in params:
            raise ShapeMismatchError(f"Gradient for unknown parameter {name}")
        grad = np.asarray(grad, dtype=float)
        value = params[name]
        if grad.shape != value.shape:
            raise ShapeMismatchError(
                f"Gradient for {name} has shape {grad.shape}, parameter has {value.shape}"
            )
        if weight_decay:
            grad = grad + weight_decay * value
        params[name] = value - lr * grad
    return params

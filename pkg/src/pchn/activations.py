"""Pointwise activation functions and their derivatives.

Each member knows its first and second derivative so downstream code
(integration, Jacobians) never hand-rolls them.  ReLU's derivative at
exactly 0 is defined as 0; Jacobian code is expected to refuse states
that sit on the kink, see stability.jacobian_analytic.
"""

from enum import Enum

import numpy as np


class Activation(Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown activation {name!r}") from None

    def apply(self, x):
        if self is Activation.IDENTITY:
            return np.asarray(x, dtype=float)
        if self is Activation.RELU:
            return np.maximum(x, 0.0)
        return np.tanh(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self is Activation.IDENTITY:
            return np.ones_like(x)
        if self is Activation.RELU:
            # convention: derivative at the kink itself is 0
            return np.where(x > 0.0, 1.0, 0.0)
        t = np.tanh(x)
        return 1.0 - t * t

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self is not Activation.TANH:
            return np.zeros_like(x)
        t = np.tanh(x)
        return -2.0 * t * (1.0 - t * t)

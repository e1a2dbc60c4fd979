"""Quantised action grids and the integer codes used for grid populations.

An action on a grid with ``levels`` points per dimension is identified by its
action index ``a = sum_d k_d * G**(D-1-d)``; a population of ``P`` such actions
is identified by its state code ``sum_p a_p * A**(P-1-p)`` with ``A = G**D``
(row 0 is the most significant digit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    levels: int
    P: int
    D: int
    x_min: tuple[float, ...]
    x_max: tuple[float, ...]

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("a grid needs at least two levels per dimension")
        if self.P < 1 or self.D < 1:
            raise ValueError("P and D must be >= 1")
        if len(self.x_min) != self.D or len(self.x_max) != self.D:
            raise ValueError("bounds must have length D")
        if any(lo >= hi for lo, hi in zip(self.x_min, self.x_max)):
            raise ValueError("x_min must be strictly below x_max")

    @classmethod
    def unit(cls, levels, P, D):
        return cls(levels, P, D, (0.0,) * D, (1.0,) * D)

    @property
    def n_actions(self) -> int:
        return self.levels**self.D

    @property
    def n_states(self) -> int:
        return self.n_actions**self.P

    def level_values(self, d: int) -> np.ndarray:
        return np.linspace(self.x_min[d], self.x_max[d], self.levels)

    def action_values(self) -> np.ndarray:
        """All grid actions as an ``(A, D)`` array, row ``a`` = action index ``a``."""
        digits = self.action_digits(np.arange(self.n_actions))
        lo = np.asarray(self.x_min)
        span = np.asarray(self.x_max) - lo
        return lo + digits * span / (self.levels - 1)

    def action_digits(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        powers = self.levels ** np.arange(self.D - 1, -1, -1, dtype=np.int64)
        return (a[..., None] // powers) % self.levels

    def state_actions(self, codes) -> np.ndarray:
        """Action indices of each population row, shape ``codes.shape + (P,)``."""
        codes = np.asarray(codes, dtype=np.int64)
        powers = self.n_actions ** np.arange(self.P - 1, -1, -1, dtype=np.int64)
        return (codes[..., None] // powers) % self.n_actions

    def encode_actions(self, actions) -> np.ndarray:
        """Inverse of :meth:`state_actions` along the last axis."""
        actions = np.asarray(actions, dtype=np.int64)
        powers = self.n_actions ** np.arange(actions.shape[-1] - 1, -1, -1, dtype=np.int64)
        return (actions * powers).sum(axis=-1)

    def action_index(self, values) -> np.ndarray:
        """Map real action vectors (``(..., D)``) onto grid action indices.

        Raises ``ValueError`` if a value is not (numerically) a grid point.
        """
        values = np.asarray(values, dtype=float)
        lo = np.asarray(self.x_min)
        span = np.asarray(self.x_max) - lo
        k_real = (values - lo) / span * (self.levels - 1)
        k = np.rint(k_real).astype(np.int64)
        if np.any(np.abs(k_real - k) > 1e-6) or np.any(k < 0) or np.any(k >= self.levels):
            raise ValueError("values are not points of this grid")
        powers = self.levels ** np.arange(self.D - 1, -1, -1, dtype=np.int64)
        return (k * powers).sum(axis=-1)

    def decode(self, code: int) -> np.ndarray:
        """Population matrix ``(P, D)`` for a state code."""
        return self.action_values()[self.state_actions(code)]

    def encode(self, X) -> int:
        X = np.asarray(X, dtype=float).reshape(self.P, self.D)
        return int(self.encode_actions(self.action_index(X)))

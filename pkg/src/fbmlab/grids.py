"""Uniform time grids and grid-sampled paths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_n = horizon."""

    n_steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be positive, got {self.n_steps}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Nearest grid index of time t (t must sit on the grid)."""
        i = int(round(t / self.dt))
        if not 0 <= i <= self.n_steps or abs(i * self.dt - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"t={t} is not a node of {self}")
        return i

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.n_steps * factor, self.horizon)


@dataclass(eq=False)
class DiscretePath:
    """Values sampled at the nodes of a TimeGrid; shape (n+1,) or (n+1, m)."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"values length {self.values.shape[0]} does not match grid "
                f"({self.grid.n_steps + 1} nodes)"
            )

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.values[j] - self.values[i]

    @classmethod
    def from_function(cls, f, grid: TimeGrid) -> "DiscretePath":
        return cls(grid, np.asarray([f(t) for t in grid.nodes], dtype=float))

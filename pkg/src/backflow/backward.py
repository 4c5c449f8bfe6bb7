"""Deterministic backward reconstruction.

Starting from terminal states at the last grid point, the chain

    x[k] = x[k+1] + v(x[k+1], k) * dt,    k = L-2, ..., 0

is rolled back with the learned (or analytic) drift v.  No noise is
injected: the drift is a conditional mean, so the recursion reconstructs
the mean path given the terminal observation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError, ModelDivergenceError
from .forward import TimeGrid
from .scorenet import ScoreModel

DriftFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass
class ReconstructionResult:
    """Initial-state estimates plus the full reconstructed paths."""

    predicted_x0: np.ndarray  # (N, 2)
    paths: np.ndarray  # (N, L, 2), paths[:, -1] are the inputs
    grid: TimeGrid


def _as_drift_fn(v: Union[ScoreModel, DriftFn], grid: TimeGrid) -> DriftFn:
    if isinstance(v, ScoreModel):
        if v.n_points != grid.n_points or v.dt != grid.dt:
            raise DomainError(
                "model was fit on a different time grid "
                f"(model: L={v.n_points}, dt={v.dt}; requested: L={grid.n_points}, dt={grid.dt})"
            )
        return v.drift
    return v


def backward_step(v: Union[ScoreModel, DriftFn], grid: TimeGrid, states, k: int) -> np.ndarray:
    """One drift-only step from x[k+1] down to x[k]."""
    if not 0 <= k <= grid.n_points - 2:
        raise DomainError(f"transition index {k} out of range for grid of {grid.n_points} points")
    drift = _as_drift_fn(v, grid)
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    return states + drift(states, k) * grid.dt


def reconstruct(
    v: Union[ScoreModel, DriftFn],
    grid: TimeGrid,
    terminal_states,
) -> ReconstructionResult:
    """Roll the full chain back from the terminal grid point to the start."""
    drift = _as_drift_fn(v, grid)
    terminal = np.atleast_2d(np.asarray(terminal_states, dtype=np.float64))
    if terminal.ndim != 2 or terminal.shape[1] != 2:
        raise DomainError(f"terminal states must have shape (N, 2), got {terminal.shape}")
    n, L = terminal.shape[0], grid.n_points
    paths = np.empty((n, L, 2))
    paths[:, L - 1] = terminal
    state = terminal
    for k in range(L - 2, -1, -1):
        state = state + drift(state, k) * grid.dt
        if not np.all(np.isfinite(state)):
            bad = int(np.argwhere(~np.isfinite(state).all(axis=1))[0, 0])
            raise ModelDivergenceError(
                f"backward recursion produced a non-finite state at step {k} "
                f"for terminal index {bad}"
            )
        paths[:, k] = state
    return ReconstructionResult(predicted_x0=paths[:, 0].copy(), paths=paths, grid=grid)

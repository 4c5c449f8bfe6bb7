"""Forward noisy particle simulation (training-data generation).

The forward flow is the explicit Euler step with additive Gaussian noise,

    x[k+1] = x[k] + b(x[k]) * dt + sigma * sqrt(dt) * eps[k],

applied on a uniform grid of ``n_points`` times.  All trajectories of a
batch start at the same point ``(exp(2 a T) * s, s)`` parameterised by the
scale ``s``.  For the axisymmetric flow, any attempt whose radial coordinate
drops to ``r <= 0`` at any step is discarded and a fresh attempt is made;
the planar flow never rejects.

Reproducibility: each attempt ``i`` draws its full noise block from an
independent generator keyed by ``(master_seed, i)``, so results do not
depend on execution order or batching strategy.  Rejected attempts consume
their key like any other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .strain import FlowKind, StrainConfig, drift

# Attempt budget: generation fails once attempts exceed this multiple of the
# requested sample count (pathological rejection rate).
MAX_ATTEMPT_FACTOR = 100


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, t_final] with n_points points (n_points - 1 steps)."""

    t_final: float
    n_points: int
    dt: float = field(init=False)

    def __post_init__(self):
        if not self.t_final > 0:
            raise DomainError(f"t_final must be positive, got {self.t_final}")
        if self.n_points < 2:
            raise DomainError(f"n_points must be >= 2, got {self.n_points}")
        object.__setattr__(self, "dt", self.t_final / (self.n_points - 1))

    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt


@dataclass(frozen=True)
class RngSpec:
    """Noise source: one independent substream per attempt index."""

    master_seed: int

    def noise_for_attempt(self, attempt: int, n_steps: int) -> np.ndarray:
        """Standard-normal block of shape (n_steps, 2), r column first."""
        rng = np.random.default_rng(np.random.SeedSequence((self.master_seed, attempt)))
        return rng.standard_normal((n_steps, 2))


@dataclass
class TrajectoryBatch:
    """N retained trajectories as an (N, L, 2) array plus provenance."""

    cfg: StrainConfig
    grid: TimeGrid
    scale: float
    seed: int
    states: np.ndarray
    attempts: int = 0

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]

    def terminal_states(self) -> np.ndarray:
        return self.states[:, -1, :]


def initial_state(cfg: StrainConfig, grid: TimeGrid, scale: float) -> np.ndarray:
    """Shared start point (exp(2 a T) * s, s) of every trajectory."""
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    return np.array([math.exp(2.0 * cfg.a * grid.t_final) * scale, scale])


def step_forward(cfg: StrainConfig, grid: TimeGrid, state, eps) -> np.ndarray:
    """One Euler step with the given pair of standard-normal draws."""
    state = np.asarray(state, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    return state + drift(cfg, state) * grid.dt + cfg.sigma * math.sqrt(grid.dt) * eps


def simulate_trajectory(cfg: StrainConfig, grid: TimeGrid, x0, noise: np.ndarray) -> np.ndarray | None:
    """Run one trajectory; returns the (L, 2) path or None if rejected.

    ``noise`` is the (L - 1, 2) standard-normal block for this attempt.
    Rejection (axisymmetric only) happens the moment any state, including
    the final one, has r <= 0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    axisym = cfg.kind is FlowKind.AXISYMMETRIC_3D
    if axisym and x0[0] <= 0:
        raise DomainError("axisymmetric start point requires r > 0")
    states = np.empty((grid.n_points, 2))
    states[0] = x0
    for k in range(grid.n_points - 1):
        states[k + 1] = step_forward(cfg, grid, states[k], noise[k])
        if axisym and states[k + 1, 0] <= 0:
            return None
    return states


def _simulate_block(cfg: StrainConfig, grid: TimeGrid, x0: np.ndarray, noise: np.ndarray):
    """Vectorised simulation of a block of attempts.

    Produces states identical to per-attempt `simulate_trajectory` for every
    retained attempt (elementwise arithmetic matches the scalar path).

    Returns (states (M, L, 2), ok (M,) bool).
    """
    m = noise.shape[0]
    axisym = cfg.kind is FlowKind.AXISYMMETRIC_3D
    states = np.empty((m, grid.n_points, 2))
    states[:, 0, :] = x0
    ok = np.ones(m, dtype=bool)
    amp = cfg.sigma * math.sqrt(grid.dt)
    for k in range(grid.n_points - 1):
        x = states[:, k, :]
        r = x[:, 0]
        z = x[:, 1]
        if axisym:
            # Dead rows keep stepping on a safe denominator; their values are
            # never used because `ok` already excludes them.
            r_safe = np.where(r > 0, r, 1.0)
            b = np.stack([-cfg.a * r - cfg.nu / r_safe, 2.0 * cfg.a * z], axis=-1)
        else:
            b = np.stack([-2.0 * cfg.a * r, 2.0 * cfg.a * z], axis=-1)
        states[:, k + 1, :] = x + b * grid.dt + amp * noise[:, k, :]
        if axisym:
            ok &= states[:, k + 1, 0] > 0
    return states, ok


def generate_batch(
    cfg: StrainConfig,
    grid: TimeGrid,
    scale: float,
    n_samples: int,
    rng: RngSpec | int,
) -> TrajectoryBatch:
    """First ``n_samples`` non-rejected trajectories in attempt order."""
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    if isinstance(rng, int):
        rng = RngSpec(rng)
    x0 = initial_state(cfg, grid, scale)
    n_steps = grid.n_points - 1
    cap = MAX_ATTEMPT_FACTOR * n_samples

    kept: list[np.ndarray] = []
    attempt = 0
    attempts_used = None
    while attempts_used is None:
        if attempt >= cap:
            raise RuntimeError(
                f"trajectory generation exceeded {cap} attempts for {n_samples} samples "
                f"(kind={cfg.kind.value}, scale={scale}, seed={rng.master_seed}); "
                "rejection rate is pathological for this configuration"
            )
        block = min(max(n_samples - len(kept), 1), cap - attempt)
        noise = np.stack([rng.noise_for_attempt(attempt + i, n_steps) for i in range(block)])
        states, ok = _simulate_block(cfg, grid, x0, noise)
        for i in range(block):
            if ok[i]:
                kept.append(states[i])
                if len(kept) == n_samples:
                    attempts_used = attempt + i + 1
                    break
        attempt += block
    return TrajectoryBatch(
        cfg=cfg,
        grid=grid,
        scale=scale,
        seed=rng.master_seed,
        states=np.array(kept),
        attempts=attempts_used,
    )


def split_batch(batch: TrajectoryBatch, train_fraction: float) -> tuple[TrajectoryBatch, TrajectoryBatch]:
    """Deterministic index split: first floor(f * N) train, remainder validation."""
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = batch.n_trajectories
    n_train = int(math.floor(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DomainError(
            f"split of {n} trajectories at fraction {train_fraction} leaves an empty side"
        )
    train = replace(batch, states=batch.states[:n_train])
    val = replace(batch, states=batch.states[n_train:])
    return train, val

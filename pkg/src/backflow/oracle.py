"""Closed-form ground truth for the linear-drift Gaussian chain.

The planar flow's Euler recursion is an exactly solvable Gaussian chain

    x[k+1] = c * x[k] + sqrt(q) * eps,   c = 1 + coeff * dt,  q = sigma^2 * dt,

started from a point mass.  This module provides its marginals, Gaussian
scores, the exact least-squares backward drift (posterior mean), the
short-time frozen-coefficient transition kernel with its amplitude factor,
and finite-difference utilities.  Everything here is a pure function; the
rest of the package is tested against these formulas, so nothing in this
module may call into the simulation or network code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, DomainError
from .strain import FlowKind, StrainConfig, drift, reaction


@dataclass(frozen=True)
class GaussianChain:
    """Per-component linear Gaussian recursion started at a point mass.

    ``c`` and ``x0`` may be scalars or per-component arrays; ``q`` is the
    per-step noise variance (shared by all components).
    """

    c: np.ndarray
    q: float
    x0: np.ndarray
    n_points: int
    dt: float

    def __init__(self, c, q: float, x0, n_points: int, dt: float):
        object.__setattr__(self, "c", np.asarray(c, dtype=np.float64))
        object.__setattr__(self, "q", float(q))
        object.__setattr__(self, "x0", np.asarray(x0, dtype=np.float64))
        object.__setattr__(self, "n_points", int(n_points))
        object.__setattr__(self, "dt", float(dt))
        if self.q < 0:
            raise DomainError(f"noise variance q must be non-negative, got {q}")

    @classmethod
    def for_planar_flow(cls, cfg: StrainConfig, grid, scale: float) -> "GaussianChain":
        """Chain matching the planar forward simulation exactly."""
        if cfg.kind is not FlowKind.PLANAR_2D:
            raise DomainError("exact chain solutions exist only for the planar (linear-drift) flow")
        from .forward import initial_state  # deferred: avoids a module cycle

        c = 1.0 + np.array([-2.0 * cfg.a, 2.0 * cfg.a]) * grid.dt
        return cls(c=c, q=cfg.sigma**2 * grid.dt, x0=initial_state(cfg, grid, scale),
                   n_points=grid.n_points, dt=grid.dt)


def chain_marginal(chain: GaussianChain, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact marginal (mean, variance) per component at step k.

    mean = x0 * c**k;  variance = q * sum_{j<k} c**(2j)  (0 at k = 0).
    """
    if not 0 <= k <= chain.n_points - 1:
        raise DomainError(f"step index {k} outside grid of {chain.n_points} points")
    c2 = chain.c * chain.c
    mean = chain.x0 * chain.c**k
    # geometric sum, robust at c == 1
    near_one = np.abs(c2 - 1.0) < 1e-12
    var = np.where(near_one, float(k) * chain.q,
                   chain.q * (c2**k - 1.0) / np.where(near_one, 1.0, c2 - 1.0))
    return mean, np.broadcast_to(var, np.broadcast(chain.c, chain.x0).shape).copy()


def gaussian_score(mean, variance, x) -> np.ndarray:
    """Spatial gradient of the log Gaussian density: -(x - mean) / variance."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance <= 0):
        raise DegenerateVarianceError("Gaussian score requires strictly positive variance")
    return -(np.asarray(x, dtype=np.float64) - mean) / variance


def posterior_mean_drift(chain: GaussianChain, k: int, x_next) -> np.ndarray:
    """Exact backward drift (E[x_k | x_{k+1}] - x_{k+1}) / dt.

    This is the least-squares minimiser of the per-transition regression
    target (x_k - x_{k+1}) / dt given x_{k+1}, computed by Gaussian
    conjugacy.  A zero-variance prior (k = 0) pins the posterior mean to
    the known start point.
    """
    if not 0 <= k <= chain.n_points - 2:
        raise DomainError(f"transition index {k} outside grid of {chain.n_points} points")
    x_next = np.asarray(x_next, dtype=np.float64)
    mean_k, var_k = chain_marginal(chain, k)
    denom = chain.c**2 * var_k + chain.q
    positive = denom > 0
    gain = np.where(positive, chain.c * var_k / np.where(positive, denom, 1.0), 0.0)
    e_prev = mean_k + gain * (x_next - chain.c * mean_k)
    return (e_prev - x_next) / chain.dt


def posterior_drift_fn(chain: GaussianChain):
    """The exact backward drift as a (states, k) callable.

    Drop-in replacement for a trained model in the backward recursion.
    """

    def drift_at(states, k: int):
        return posterior_mean_drift(chain, k, states)

    return drift_at


def frozen_transition_density(cfg: StrainConfig, x, x_next, dt: float) -> np.ndarray:
    """Short-time constant-coefficient kernel with amplitude factor.

    exp(S(x) dt) * prod_i N(x_next_i; x_i + b_i(x) dt, sigma^2 dt), with the
    scalar amplitude factor applied once to the two-component product.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if cfg.nu <= 0:
        raise DegenerateVarianceError("transition density requires nu > 0")
    x = np.asarray(x, dtype=np.float64)
    x_next = np.asarray(x_next, dtype=np.float64)
    var = cfg.sigma**2 * dt
    mean = x + drift(cfg, x) * dt
    quad = np.sum((x_next - mean) ** 2, axis=-1)
    norm = (2.0 * math.pi * var) ** (-1.0)  # two components
    return np.exp(reaction(cfg, x) * dt) * norm * np.exp(-quad / (2.0 * var))


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        grad.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad

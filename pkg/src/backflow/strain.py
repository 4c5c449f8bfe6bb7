"""Steady strain velocity fields and their effective transport coefficients.

Two flow kinds are supported on the (r, z) half-plane / plane:

* ``AXISYMMETRIC_3D``: the hyperbolic strain ``u = (-a r, 2 a z)``.  The
  effective particle drift acquires the geometric correction ``-nu / r`` in
  the radial component, and the associated zeroth-order reaction coefficient
  is ``S = 3 a + 2 nu / r**2``.
* ``PLANAR_2D``: the plane strain ``u = (-2 a r, 2 a z)``.  Drift equals the
  velocity and ``S = 2 a`` (same structural formula, no geometric term).

States are arrays whose last axis holds the two components ``(r, z)``; all
functions broadcast over leading axes.  Everything here is a pure function
of its inputs and safe to call from any thread.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


class FlowKind(enum.Enum):
    """Which strain geometry the pipeline runs on."""

    AXISYMMETRIC_3D = "axisymmetric3d"
    PLANAR_2D = "planar2d"


@dataclass(frozen=True)
class StrainConfig:
    """Strain field parameters.

    ``sigma`` is always ``sqrt(2 * nu)`` -- it is derived, never stored or
    set independently.  ``nu == 0`` is allowed as a deterministic test mode
    (zero noise, no geometric drift correction).
    """

    kind: FlowKind
    a: float
    nu: float
    sigma: float = field(init=False)

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"strain rate a must be positive, got {self.a}")
        if self.nu < 0:
            raise DomainError(f"viscosity nu must be non-negative, got {self.nu}")
        object.__setattr__(self, "sigma", math.sqrt(2.0 * self.nu))


def _split(state) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(state, dtype=np.float64)
    if arr.shape[-1] != 2:
        raise DomainError(f"state must have 2 components on the last axis, got shape {arr.shape}")
    return arr[..., 0], arr[..., 1]


def _require_positive_r(r: np.ndarray) -> None:
    if np.any(r <= 0):
        raise DomainError("axisymmetric operation requires r > 0")


def velocity(cfg: StrainConfig, state) -> np.ndarray:
    """Strain velocity (u_r, u_z) at ``state``; divergence-free for both kinds."""
    r, z = _split(state)
    if cfg.kind is FlowKind.AXISYMMETRIC_3D:
        return np.stack([-cfg.a * r, 2.0 * cfg.a * z], axis=-1)
    return np.stack([-2.0 * cfg.a * r, 2.0 * cfg.a * z], axis=-1)


def drift(cfg: StrainConfig, state) -> np.ndarray:
    """Effective particle drift (b_r, b_z).

    Axisymmetric flow subtracts the geometric term ``nu / r`` from the radial
    velocity and therefore requires ``r > 0``.
    """
    r, z = _split(state)
    if cfg.kind is FlowKind.AXISYMMETRIC_3D:
        _require_positive_r(r)
        return np.stack([-cfg.a * r - cfg.nu / r, 2.0 * cfg.a * z], axis=-1)
    return np.stack([-2.0 * cfg.a * r, 2.0 * cfg.a * z], axis=-1)


def reaction(cfg: StrainConfig, state) -> np.ndarray:
    """Zeroth-order (amplitude) coefficient S = d_r b_r + 2 d_z b_z [+ nu/r^2].

    S multiplies the transported density amplitude; it does not enter the
    particle trajectories anywhere in this package.
    """
    r, _ = _split(state)
    if cfg.kind is FlowKind.AXISYMMETRIC_3D:
        _require_positive_r(r)
        return 3.0 * cfg.a + 2.0 * cfg.nu / (r * r)
    return np.broadcast_to(np.float64(2.0 * cfg.a), r.shape).copy() if r.ndim else np.float64(2.0 * cfg.a)


def forcing(cfg: StrainConfig, state) -> np.ndarray:
    """External source term hook.

    Identically zero for the hyperbolic strain fields implemented here;
    kept as an explicit operation so the transport model is complete.
    """
    r, _ = _split(state)
    return np.zeros_like(r)

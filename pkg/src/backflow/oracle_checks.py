"""Named numerical checks tying the learned pipeline to closed-form facts.

Each check returns a CheckResult with the measured numbers, so the CLI and
the service can report exactly what was compared, not just a boolean.  All
checks are deterministic: seeds are fixed inside this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import TimeGrid, generate_batch, initial_state
from .oracle import (
    GaussianChain,
    chain_marginal,
    frozen_transition_density,
    gaussian_score,
    posterior_mean_drift,
)
from .scorenet import NormStats, build_training_pairs, init_model, loss, loss_gradient
from .strain import FlowKind, StrainConfig, drift as strain_drift, reaction


@dataclass
class CheckResult:
    name: str
    passed: bool
    measures: dict
    detail: str


def check_gradient_vs_finite_difference() -> CheckResult:
    """Backprop against a central finite difference along a random direction."""
    grid = TimeGrid(2.0, 50)
    cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=0.01)
    batch = generate_batch(cfg, grid, scale=1.0, n_samples=30, rng=21)
    pairs = build_training_pairs(batch)
    sub = pairs.take(np.arange(64))
    model = init_model(grid, NormStats.from_pairs(pairs), seed=5)
    grads = loss_gradient(model, sub)

    rng = np.random.default_rng(17)
    dw = [rng.standard_normal(w.shape) for w in model.weights]
    db = [rng.standard_normal(b.shape) for b in model.biases]
    norm = np.sqrt(
        sum(float(np.sum(d * d)) for d in dw) + sum(float(np.sum(d * d)) for d in db)
    )
    dw = [d / norm for d in dw]
    db = [d / norm for d in db]

    h = 1e-4
    def shifted(sign):
        for d, w in zip(dw, model.weights):
            w += sign * h * d
        for d, b in zip(db, model.biases):
            b += sign * h * d
        value = loss(model, sub)
        for d, w in zip(dw, model.weights):
            w -= sign * h * d
        for d, b in zip(db, model.biases):
            b -= sign * h * d
        return value

    fd = (shifted(+1) - shifted(-1)) / (2 * h)
    analytic = sum(float(np.sum(g * d)) for g, d in zip(grads.weights, dw))
    analytic += sum(float(np.sum(g * d)) for g, d in zip(grads.biases, db))
    rel = abs(fd - analytic) / max(abs(fd), abs(analytic))
    return CheckResult(
        name="gradient_vs_finite_difference",
        passed=bool(rel <= 1e-5),
        measures={"relative_error": rel, "tolerance": 1e-5},
        detail=f"directional derivative: analytic {analytic:.6e}, finite-diff {fd:.6e}",
    )


def check_chain_moments_vs_simulation() -> CheckResult:
    """Empirical marginal moments of the simulated linear flow against the
    closed-form chain, within 3 standard errors at early/mid/final steps."""
    grid = TimeGrid(2.0, 200)
    cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=1.0)
    scale = 1.0
    n = 20000
    batch = generate_batch(cfg, grid, scale=scale, n_samples=n, rng=97)
    chain = GaussianChain.for_planar_flow(cfg, grid, scale)
    worst = 0.0
    for k in (10, 100, grid.n_points - 1):
        mean_k, var_k = chain_marginal(chain, k)
        sample = batch.states[:, k, :]
        emp_mean = sample.mean(axis=0)
        emp_var = sample.var(axis=0, ddof=1)
        se_mean = np.sqrt(var_k / n)
        se_var = var_k * np.sqrt(2.0 / (n - 1))
        z_mean = np.abs(emp_mean - mean_k) / se_mean
        z_var = np.abs(emp_var - var_k) / se_var
        worst = max(worst, float(z_mean.max()), float(z_var.max()))
    return CheckResult(
        name="chain_moments_vs_simulation",
        passed=bool(worst <= 3.0),
        measures={"worst_z": worst, "tolerance_z": 3.0},
        detail=f"max moment deviation {worst:.2f} standard errors over k in {{10, 100, 199}}",
    )


def check_tower_property() -> CheckResult:
    """The binned empirical mean of the per-step backward target matches the
    closed-form conditional-mean drift at the bin centers."""
    grid = TimeGrid(2.0, 200)
    cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=1.0)
    chain = GaussianChain.for_planar_flow(cfg, grid, 1.0)
    k = 10
    m = 100_000
    dt = grid.dt
    rng = np.random.default_rng(1234)
    mean_k, var_k = chain_marginal(chain, k)
    x_k = mean_k + np.sqrt(var_k) * rng.standard_normal((m, 2))
    eps = rng.standard_normal((m, 2))
    x_next = x_k + strain_drift(cfg, x_k) * dt + cfg.sigma * np.sqrt(dt) * eps
    target = (x_k - x_next) / dt

    mean_n, var_n = chain_marginal(chain, k + 1)
    worst = 0.0
    checked = 0
    for c in range(2):
        lo = mean_n[c] - 3 * np.sqrt(var_n[c])
        hi = mean_n[c] + 3 * np.sqrt(var_n[c])
        edges = np.linspace(lo, hi, 21)
        centers = 0.5 * (edges[:-1] + edges[1:])
        idx = np.digitize(x_next[:, c], edges) - 1
        states = np.tile(mean_n, (20, 1))
        states[:, c] = centers
        predicted = posterior_mean_drift(chain, k, states)[:, c]
        for b in range(20):
            inside = idx == b
            if inside.sum() < 50:
                continue
            vals = target[inside, c]
            se = vals.std(ddof=1) / np.sqrt(inside.sum())
            worst = max(worst, float(abs(vals.mean() - predicted[b]) / se))
            checked += 1
    return CheckResult(
        name="tower_property",
        passed=bool(worst <= 3.0 and checked >= 30),
        measures={"worst_z": worst, "bins_checked": float(checked), "tolerance_z": 3.0},
        detail=f"max binned-mean deviation {worst:.2f} SE across {checked} bins at k={k}",
    )


def check_score_drift_identity() -> CheckResult:
    """Conditional-mean drift equals the linear pullback plus the diffusion
    times the marginal score, up to a first-order-in-dt remainder: halving
    dt must roughly halve the residual."""
    cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=1.0)
    t_star = 0.2

    def residual(n_points: int) -> float:
        grid = TimeGrid(2.0, n_points)
        dt = grid.dt
        k = int(round(t_star / dt))
        chain = GaussianChain.for_planar_flow(cfg, grid, 1.0)
        mean_n, var_n = chain_marginal(chain, k + 1)
        span = np.linspace(-2.0, 2.0, 9)
        states = mean_n + np.sqrt(var_n) * span[:, None]
        drift = posterior_mean_drift(chain, k, states)
        score = gaussian_score(mean_n, var_n, states)
        identity = -(chain.c - 1.0) / dt * states + cfg.sigma**2 * score
        return float(np.max(np.abs(drift - identity)))

    r1 = residual(101)   # dt = 0.02
    r2 = residual(201)   # dt = 0.01
    ratio = r2 / r1
    return CheckResult(
        name="score_drift_identity",
        passed=bool(0.3 <= ratio <= 0.7),
        measures={"residual_dt": r1, "residual_half_dt": r2, "ratio": ratio},
        detail=f"residual {r1:.3e} -> {r2:.3e} under dt halving (ratio {ratio:.3f})",
    )


def check_delta_prior_divergence() -> CheckResult:
    """With a point prior the backward drift is affine with slope -1/dt per
    coordinate, so its divergence is exactly -2/dt."""
    cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=1.0)
    grid = TimeGrid(2.0, 129)  # dt = 2/128, exactly representable
    chain = GaussianChain.for_planar_flow(cfg, grid, 1.0)
    dt = grid.dt
    y = np.array([0.75, -1.25])
    h = 0.0078125  # 2**-7
    div = 0.0
    for c in range(2):
        up, dn = y.copy(), y.copy()
        up[c] += h
        dn[c] -= h
        dp = posterior_mean_drift(chain, 0, up)[c]
        dm = posterior_mean_drift(chain, 0, dn)[c]
        div += (dp - dm) / (2 * h)
    expected = -2.0 / dt
    rel = abs(div - expected) / abs(expected)
    return CheckResult(
        name="delta_prior_divergence",
        passed=bool(rel <= 1e-12),
        measures={"divergence": div, "expected": expected, "relative_error": rel},
        detail=f"divergence {div!r} vs -2/dt = {expected!r}",
    )


def check_frozen_density_normalization() -> CheckResult:
    """The frozen one-step kernel integrates to exp(S dt): quadrature over a
    wide tensor grid, for both flow kinds."""
    worst = 0.0
    for kind, x in (
        (FlowKind.AXISYMMETRIC_3D, np.array([1.3, 0.4])),
        (FlowKind.PLANAR_2D, np.array([0.8, -0.6])),
    ):
        cfg = StrainConfig(kind=kind, a=1.0, nu=1.0)
        grid = TimeGrid(2.0, 200)
        dt = grid.dt
        width = cfg.sigma * np.sqrt(dt)
        center = x + strain_drift(cfg, x) * dt
        axis_r = center[0] + np.linspace(-8, 8, 1201) * width
        axis_z = center[1] + np.linspace(-8, 8, 1201) * width
        gr, gz = np.meshgrid(axis_r, axis_z, indexing="ij")
        pts = np.stack([gr, gz], axis=-1)
        dens = frozen_transition_density(cfg, x, pts, dt)
        integral = np.trapezoid(np.trapezoid(dens, axis_z, axis=1), axis_r)
        expected = float(np.exp(reaction(cfg, x) * dt))
        rel = abs(float(integral) - expected) / expected
        worst = max(worst, rel)
    return CheckResult(
        name="frozen_density_normalization",
        passed=bool(worst <= 1e-6),
        measures={"worst_relative_error": worst, "tolerance": 1e-6},
        detail=f"kernel mass vs exp(S dt): worst relative error {worst:.2e}",
    )


def check_euler_order_zero_noise() -> CheckResult:
    """Without noise the one-step scheme is first order: doubling the step
    count halves the terminal error, within 20 percent."""
    cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=0.0)
    scale = 1.0

    def terminal_error(n_points: int) -> float:
        grid = TimeGrid(2.0, n_points)
        batch = generate_batch(cfg, grid, scale=scale, n_samples=1, rng=0)
        x0 = initial_state(cfg, grid, scale)
        exact = np.array([
            x0[0] * np.exp(-2 * cfg.a * grid.t_final),
            x0[1] * np.exp(2 * cfg.a * grid.t_final),
        ])
        return float(np.max(np.abs(batch.states[0, -1] - exact)))

    e1 = terminal_error(101)
    e2 = terminal_error(201)
    ratio = e1 / e2
    return CheckResult(
        name="euler_order_zero_noise",
        passed=bool(1.6 <= ratio <= 2.4),
        measures={"error_coarse": e1, "error_fine": e2, "ratio": ratio},
        detail=f"terminal error {e1:.3e} -> {e2:.3e} under step doubling (ratio {ratio:.2f})",
    )


ALL_CHECKS = (
    check_gradient_vs_finite_difference,
    check_chain_moments_vs_simulation,
    check_tower_property,
    check_score_drift_identity,
    check_delta_prior_divergence,
    check_frozen_density_normalization,
    check_euler_order_zero_noise,
)


def run_all_checks() -> list:
    return [fn() for fn in ALL_CHECKS]

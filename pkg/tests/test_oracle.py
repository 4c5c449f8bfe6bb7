import math

import numpy as np
import pytest
from scipy.stats import norm

from backflow.errors import DegenerateVarianceError, DomainError
from backflow.forward import TimeGrid, initial_state
from backflow.oracle import (
    GaussianChain,
    chain_marginal,
    finite_diff_grad,
    frozen_transition_density,
    gaussian_score,
    posterior_drift_fn,
    posterior_mean_drift,
)
from backflow.strain import FlowKind, StrainConfig

PLANAR = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=1.0)
AXI = StrainConfig(kind=FlowKind.AXISYMMETRIC_3D, a=1.0, nu=1.0)


def scalar_chain(c, q, x0, n_points=50, dt=0.01):
    return GaussianChain(c=c, q=q, x0=x0, n_points=n_points, dt=dt)


class TestChainMarginal:
    def test_delta_start(self):
        mean, var = chain_marginal(scalar_chain(1.02, 0.02, 1.0), 0)
        assert mean == 1.0
        assert var == 0.0

    def test_pure_diffusion_variance(self):
        chain = scalar_chain(1.0, 0.25, 0.0)
        for k in (1, 5, 17):
            mean, var = chain_marginal(chain, k)
            assert mean == 0.0
            assert var == pytest.approx(k * 0.25)

    def test_two_step_worked_example(self):
        mean, var = chain_marginal(scalar_chain(1.02, 0.02, 1.0), 2)
        assert mean == pytest.approx(1.0404)
        assert var == pytest.approx(0.040808)

    def test_variance_strictly_increasing(self):
        chain = scalar_chain(0.98, 0.01, 2.0)
        variances = [chain_marginal(chain, k)[1] for k in range(10)]
        assert all(b > a for a, b in zip(variances, variances[1:]))

    def test_step_bounds(self):
        chain = scalar_chain(1.0, 0.1, 0.0, n_points=5)
        for k in (-1, 5):
            with pytest.raises(DomainError):
                chain_marginal(chain, k)

    def test_negative_q_rejected(self):
        with pytest.raises(DomainError):
            scalar_chain(1.0, -0.1, 0.0)


class TestPlanarChainConstruction:
    def test_matches_flow_coefficients(self):
        grid = TimeGrid(t_final=2.0, n_points=100)
        chain = GaussianChain.for_planar_flow(PLANAR, grid, scale=3.0)
        assert np.allclose(chain.c, [1.0 - 2.0 * grid.dt, 1.0 + 2.0 * grid.dt])
        assert chain.q == pytest.approx(PLANAR.sigma**2 * grid.dt)
        assert np.array_equal(chain.x0, initial_state(PLANAR, grid, 3.0))
        assert chain.n_points == 100

    def test_rejects_axisymmetric(self):
        grid = TimeGrid(t_final=2.0, n_points=10)
        with pytest.raises(DomainError):
            GaussianChain.for_planar_flow(AXI, grid, scale=1.0)

    def test_mean_tracks_exponential_rates(self):
        # after L-1 steps the discrete mean approximates e^{-2aT}, e^{+2aT}
        grid = TimeGrid(t_final=2.0, n_points=2000)
        chain = GaussianChain.for_planar_flow(PLANAR, grid, scale=1.0)
        mean, _ = chain_marginal(chain, grid.n_points - 1)
        assert mean[0] == pytest.approx(1.0, rel=0.01)  # e^{4}·e^{-4}
        assert mean[1] == pytest.approx(math.exp(4.0), rel=0.01)


class TestGaussianScore:
    def test_zero_at_mode(self):
        assert gaussian_score(1.5, 0.3, 1.5) == 0.0

    def test_unit_example(self):
        assert gaussian_score(0.0, 1.0, 2.0) == -2.0

    def test_heat_kernel_identity(self):
        # 2 nu * score of the dt-kernel recovers the noise at rate sqrt(2 nu / dt)
        nu, dt, eps = 1.0, 0.01, 0.7
        x = 0.4
        x_next = x + math.sqrt(2.0 * nu * dt) * eps
        lhs = 2.0 * nu * gaussian_score(x, 2.0 * nu * dt, x_next)
        assert lhs == pytest.approx(-math.sqrt(2.0 * nu / dt) * eps, rel=1e-12)

    def test_vectorized(self):
        out = gaussian_score(np.zeros(3), np.ones(3), np.array([1.0, -2.0, 0.5]))
        assert np.allclose(out, [-1.0, 2.0, -0.5])

    def test_degenerate_variance(self):
        for var in (0.0, -1.0):
            with pytest.raises(DegenerateVarianceError):
                gaussian_score(0.0, var, 1.0)


class TestPosteriorMeanDrift:
    def test_delta_prior_pulls_to_start(self):
        chain = scalar_chain(1.02, 0.02, 1.0, dt=0.05)
        drift = posterior_mean_drift(chain, 0, 3.0)
        assert drift == pytest.approx((1.0 - 3.0) / 0.05)

    def test_equal_variance_halves_innovation(self):
        # c=1, v_1 = q: posterior mean of x_1 given x_2 = 1 is 1/2
        chain = scalar_chain(1.0, 0.2, 0.0, dt=0.1)
        drift = posterior_mean_drift(chain, 1, 1.0)
        assert drift == pytest.approx(-0.5 / 0.1)

    def test_small_noise_limit_inverts_the_step(self):
        # once c^2 v_k >> q the posterior mean approaches x_next / c
        chain = scalar_chain(1.02, 1e-4, 1.0, n_points=300, dt=0.01)
        k = 200
        x_next = 9.0
        e_prev = x_next + 0.01 * posterior_mean_drift(chain, k, x_next)
        assert e_prev == pytest.approx(x_next / 1.02, rel=1e-3)

    def test_transition_index_bounds(self):
        chain = scalar_chain(1.0, 0.1, 0.0, n_points=10)
        for k in (-1, 9):
            with pytest.raises(DomainError):
                posterior_mean_drift(chain, k, 1.0)

    def test_per_component_broadcast(self):
        grid = TimeGrid(t_final=2.0, n_points=50)
        chain = GaussianChain.for_planar_flow(PLANAR, grid, scale=1.0)
        x = np.array([[0.5, 1.0], [1.5, -2.0], [0.0, 0.0]])
        out = posterior_mean_drift(chain, 7, x)
        assert out.shape == (3, 2)
        for i in range(3):
            for c in range(2):
                comp = GaussianChain(c=chain.c[c], q=chain.q, x0=chain.x0[c],
                                     n_points=chain.n_points, dt=chain.dt)
                assert out[i, c] == pytest.approx(posterior_mean_drift(comp, 7, x[i, c]))

    def test_drift_fn_wrapper(self):
        grid = TimeGrid(t_final=2.0, n_points=20)
        chain = GaussianChain.for_planar_flow(PLANAR, grid, scale=1.0)
        fn = posterior_drift_fn(chain)
        x = np.array([[1.0, 2.0]])
        assert np.array_equal(fn(x, 3), posterior_mean_drift(chain, 3, x))

    def test_delta_prior_divergence_law(self):
        # linear map with slope -1/dt per component: divergence is exactly -2/dt
        chain = GaussianChain.for_planar_flow(PLANAR, TimeGrid(t_final=2.0, n_points=129), scale=1.0)
        h = 2.0**-6
        x = np.array([0.3, -0.8])
        div = 0.0
        for i in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            div += (posterior_mean_drift(chain, 0, xp)[i] - posterior_mean_drift(chain, 0, xm)[i]) / (2 * h)
        assert div == pytest.approx(-2.0 / chain.dt, rel=1e-12)


class TestFrozenTransitionDensity:
    def test_peak_value_carries_reaction_factor(self):
        dt = 0.01
        x = np.array([1.2, 0.5])
        peak_target = x + np.array([-2.0 * x[0], 2.0 * x[1]]) * dt
        peak = frozen_transition_density(PLANAR, x, peak_target, dt)
        var = PLANAR.sigma**2 * dt
        assert peak == pytest.approx(math.exp(2.0 * dt) / (2.0 * math.pi * var))

    def test_tiny_reaction_recovers_plain_gaussian_peak(self):
        cfg = StrainConfig(kind=FlowKind.PLANAR_2D, a=1e-9, nu=1.0)
        dt = 0.01
        x = np.array([0.7, -0.2])
        peak = frozen_transition_density(cfg, x, x + np.array([-2e-9 * x[0], 2e-9 * x[1]]) * dt, dt)
        assert peak == pytest.approx(1.0 / (2.0 * math.pi * cfg.sigma**2 * dt), rel=1e-6)

    def test_one_sigma_offset(self):
        dt = 0.01
        x = np.array([1.2, 0.5])
        mean = x + np.array([-2.0 * x[0], 2.0 * x[1]]) * dt
        off = mean + np.array([PLANAR.sigma * math.sqrt(dt), 0.0])
        peak = frozen_transition_density(PLANAR, x, mean, dt)
        assert frozen_transition_density(PLANAR, x, off, dt) == pytest.approx(peak * math.exp(-0.5))

    @pytest.mark.parametrize("cfg,x", [(PLANAR, (0.4, -1.1)), (AXI, (1.3, 0.6))])
    def test_integral_equals_reaction_amplitude(self, cfg, x):
        from backflow.strain import reaction

        dt = 0.01
        x = np.array(x)
        std = cfg.sigma * math.sqrt(dt)
        mean = x  # offsets of order dt are tiny against the 8-sigma window
        axis = np.linspace(-8.0 * std, 8.0 * std, 801)
        rr, zz = np.meshgrid(mean[0] + axis, mean[1] + axis, indexing="ij")
        grid_pts = np.stack([rr, zz], axis=-1)
        dens = frozen_transition_density(cfg, x, grid_pts, dt)
        integral = np.trapezoid(np.trapezoid(dens, axis[None, :] + mean[1]), axis + mean[0])
        assert integral == pytest.approx(math.exp(reaction(cfg, x) * dt), abs=1e-6)

    def test_argument_validation(self):
        x = np.array([1.0, 0.0])
        with pytest.raises(DomainError):
            frozen_transition_density(PLANAR, x, x, 0.0)
        with pytest.raises(DegenerateVarianceError):
            frozen_transition_density(
                StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=0.0), x, x, 0.01
            )
        with pytest.raises(DomainError):
            frozen_transition_density(AXI, np.array([-1.0, 0.0]), x, 0.01)


class TestFiniteDiffGrad:
    def test_square(self):
        grad = finite_diff_grad(lambda v: float(v[0] ** 2), np.array([3.0]))
        assert grad[0] == pytest.approx(6.0, abs=1e-8)

    def test_constant(self):
        grad = finite_diff_grad(lambda v: 5.0, np.array([1.0, -2.0, 0.3]))
        assert np.array_equal(grad, np.zeros(3))

    def test_matches_gaussian_score_on_log_density(self):
        grid = TimeGrid(t_final=2.0, n_points=50)
        chain = GaussianChain.for_planar_flow(PLANAR, grid, scale=1.0)
        mean, var = chain_marginal(chain, 5)

        def log_density(v):
            return float(np.sum(norm.logpdf(v, loc=mean, scale=np.sqrt(var))))

        x = mean + np.array([0.3, -0.5])
        grad = finite_diff_grad(log_density, x)
        assert np.allclose(grad, gaussian_score(mean, var, x), atol=1e-6)

import numpy as np
import pytest
from pydantic import ValidationError

from network.models import DomainMeasure, NetworkShape, ParamVector
from network.services import exact_fit, exact_fit_linear
from risk.services import gradient_norm_bound
from highdim.containers import highdim_container
from highdim.models import MCEstimate
from highdim.services import MonteCarloService, UnivariateTarget, block_generator, linear_target


class TestMCEstimate:
    def test_rejects_negative_error(self):
        with pytest.raises(ValidationError):
            MCEstimate(mean=1.0, std_error=-0.1, n_samples=10, seed=1)

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ValidationError):
            MCEstimate(mean=(1.0, 2.0), std_error=(0.1,), n_samples=10, seed=1)

    def test_within(self):
        estimate = MCEstimate(mean=(1.0, 2.0), std_error=(0.1, 0.1), n_samples=10, seed=1)

        assert estimate.within([1.3, 2.0])
        assert not estimate.within([1.5, 2.0])


class TestTargets:
    def test_linear_target(self):
        f = linear_target([1.0, -2.0], intercept=0.5)

        np.testing.assert_array_equal(f(np.array([[1.0, 1.0], [0.0, 2.0]])), [-0.5, -3.5])

    def test_univariate_adapter(self, identity_target):
        f = UnivariateTarget(identity_target)

        np.testing.assert_array_equal(f(np.array([[0.25], [0.5]])), [0.25, 0.5])


class TestMonteCarloRisk:
    def test_exact_fit_has_zero_estimate(self, mc_service, identity_target, unit_domain):
        theta = exact_fit(NetworkShape(d=1, H=2), 1.0, 0.0, unit_domain)

        estimate = mc_service.mc_risk(theta, UnivariateTarget(identity_target), unit_domain, n=10_000, seed=3)

        assert estimate.mean == 0.0
        assert estimate.std_error == 0.0

    def test_constant_offset(self, mc_service, unit_domain):
        # Arrange: N(x) = x + 1 against f(x) = x, the residual is identically 1
        theta = ParamVector.from_parts([1.0], [0.0], [1.0], 1.0)

        # Act
        estimate = mc_service.mc_risk(theta, linear_target([1.0]), unit_domain, n=1_000_000, seed=1)

        # Assert
        assert estimate.within(1.0)
        assert estimate.n_samples == 1_000_000

    def test_planar_exact_fit(self, mc_service, unit_domain):
        theta = exact_fit_linear(NetworkShape(d=2, H=2), [1.0, 1.0], 0.0, unit_domain)

        estimate = mc_service.mc_risk(theta, linear_target([1.0, 1.0]), unit_domain, n=20_000, seed=4)

        assert estimate.mean == pytest.approx(0.0, abs=1e-24)

    def test_scales_with_box_volume(self, mc_service):
        # Arrange: residual 1 everywhere on [0, 2]^2 with rho = 3
        dom = DomainMeasure(a=0.0, b=2.0, rho=3.0)
        theta = ParamVector.from_parts(np.zeros((1, 2)), [0.0], [0.0], 1.0)

        # Act
        estimate = mc_service.mc_risk(theta, linear_target([0.0, 0.0]), dom, n=100, seed=1)

        # Assert
        assert estimate.mean == pytest.approx(12.0)

    def test_requires_two_samples(self, mc_service, identity_target, unit_domain):
        theta = ParamVector.zeros(NetworkShape(d=1, H=1))

        with pytest.raises(ValueError):
            mc_service.mc_risk(theta, UnivariateTarget(identity_target), unit_domain, n=1, seed=1)


class TestMonteCarloGradient:
    def test_constant_offset(self, mc_service, unit_domain):
        theta = ParamVector.from_parts([1.0], [0.0], [1.0], 1.0)

        estimate = mc_service.mc_gradient(theta, linear_target([1.0]), unit_domain, n=1_000_000, seed=1)

        assert estimate.within([1.0, 2.0, 1.0, 2.0])

    def test_inactive_neuron_components_vanish(self, mc_service, unit_domain, rng):
        # Arrange: neuron 1 has negative preactivation on all of [0, 1]^2
        w = np.array([[-1.0, -1.0], [1.0, 0.5]])
        theta = ParamVector.from_parts(w, [-0.5, 0.1], [2.0, -1.0], 0.3)

        # Act
        estimate = mc_service.mc_gradient(theta, linear_target([1.0, -1.0]), unit_domain, n=5_000, seed=9)

        # Assert: w_1 is entries 0, 1, b_1 is entry 4, v_1 is entry 6
        mean = estimate.mean_array
        assert mean[[0, 1, 4, 6]].tolist() == [0.0, 0.0, 0.0, 0.0]
        assert np.all(estimate.std_error_array[[0, 1, 4, 6]] == 0.0)

    def test_gradient_bound_on_planar_instances(self, mc_service, unit_domain, random_planar_theta):
        f = linear_target([1.0, -0.5], intercept=0.2)
        for k in range(50):
            theta = random_planar_theta(H=3)

            risk = mc_service.mc_risk(theta, f, unit_domain, n=4_000, seed=k)
            grad = mc_service.mc_gradient(theta, f, unit_domain, n=4_000, seed=k)

            lhs = max(np.linalg.norm(grad.mean_array) - 5.0 * np.linalg.norm(grad.std_error_array), 0.0)
            rhs = gradient_norm_bound(theta, risk.mean + 5.0 * risk.std_error, unit_domain)
            assert lhs ** 2 <= rhs


class TestCrossValidation:
    def test_agrees_with_exact_risk(self, mc_service, exact_service, identity_target, unit_domain, separated_theta):
        f = UnivariateTarget(identity_target)
        for k in range(30):
            theta = separated_theta(H=1 + k % 3)

            risk = mc_service.mc_risk(theta, f, unit_domain, n=20_000, seed=100 + k)
            grad = mc_service.mc_gradient(theta, f, unit_domain, n=20_000, seed=100 + k)

            assert risk.within(exact_service.risk(theta, identity_target, unit_domain), sigmas=5.0)
            assert grad.within(exact_service.gradient(theta, identity_target, unit_domain), sigmas=5.0)


class TestDeterminism:
    def test_same_seed_same_estimate(self, mc_service, unit_domain, separated_theta):
        theta = separated_theta(H=2)
        f = linear_target([2.0], intercept=-1.0)

        first = mc_service.mc_gradient(theta, f, unit_domain, n=20_000, seed=42)
        second = mc_service.mc_gradient(theta, f, unit_domain, n=20_000, seed=42)

        assert first == second

    def test_different_seed_different_estimate(self, mc_service, unit_domain, separated_theta):
        theta = separated_theta(H=2)
        f = linear_target([2.0], intercept=-1.0)

        first = mc_service.mc_risk(theta, f, unit_domain, n=1_000, seed=1)
        second = mc_service.mc_risk(theta, f, unit_domain, n=1_000, seed=2)

        assert first.mean != second.mean

    def test_worker_count_does_not_change_estimate(self, unit_domain, separated_theta):
        theta = separated_theta(H=2)
        f = linear_target([1.0])
        serial = MonteCarloService(block_size=1_000, workers=1)
        parallel = MonteCarloService(block_size=1_000, workers=2)

        assert serial.mc_risk(theta, f, unit_domain, n=5_500, seed=8) == parallel.mc_risk(theta, f, unit_domain, n=5_500, seed=8)

    def test_block_streams_are_independent(self):
        first = block_generator(1, 0).random(4)
        second = block_generator(1, 1).random(4)

        assert not np.array_equal(first, second)
        np.testing.assert_array_equal(first, block_generator(1, 0).random(4))


class TestHighDimContainer:
    def test_service_is_singleton(self):
        assert highdim_container.monte_carlo_service() is highdim_container.monte_carlo_service()

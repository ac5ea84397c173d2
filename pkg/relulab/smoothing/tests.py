import numpy as np
import pytest

from relulab.exceptions import DimensionError
from network.models import NetworkShape, ParamVector, Target, TargetPiece
from risk.models import RiskReport
from smoothing.containers import smoothing_container
from smoothing.models import SmoothActivation
from smoothing.quadrature import adaptive_gauss_legendre, fixed_rule, gauss_legendre
from smoothing.services import SmoothedRiskService, smoothed_deriv, smoothed_value, smoothing_edges


def theta_of(w, b, v, c):
    return ParamVector.from_parts([w], [b], [v], c)


class TestSmoothActivation:
    def test_zero_left_of_window(self):
        assert smoothed_value(SmoothActivation(r=10), -1.0) == 0.0

    def test_identity_right_of_window(self):
        assert smoothed_value(SmoothActivation(r=10), 0.5) == 0.5

    def test_window_midpoint(self):
        assert smoothed_value(SmoothActivation(r=10), 0.075) == pytest.approx(0.04375, rel=1e-14)

    def test_window(self):
        assert SmoothActivation(r=4).window == (0.125, 0.25)

    @pytest.mark.parametrize('r', [1, 10, 100, 1000])
    def test_derivative_vanishes_at_zero(self, r):
        assert smoothed_deriv(SmoothActivation(r=r), 0.0) == 0.0

    def test_derivative_right_of_window(self):
        assert smoothed_deriv(SmoothActivation(r=10), 0.5) == 1.0

    def test_derivative_converges_inside_positive_axis(self):
        values = [smoothed_deriv(SmoothActivation(r=r), 0.05) for r in (10, 100, 1000)]

        assert values[0] == 0.0
        assert values[1:] == [1.0, 1.0]

    @pytest.mark.parametrize('r', [3, 10, 250])
    def test_joints_are_continuously_differentiable(self, r):
        # Arrange
        act = SmoothActivation(r=r)
        h = 1e-9 / r

        for joint in act.window:
            # Act: one-sided slopes on both sides of the joint
            left = (act.value(joint) - act.value(joint - h)) / h
            right = (act.value(joint + h) - act.value(joint)) / h

            # Assert
            assert left == pytest.approx(act.deriv(joint), abs=1e-6)
            assert right == pytest.approx(act.deriv(joint), abs=1e-6)

    def test_derivative_matches_value_inside_window(self):
        act = SmoothActivation(r=10)
        x = np.linspace(0.051, 0.099, 25)
        h = 1e-8

        fd = (act.value(x + h) - act.value(x - h)) / (2.0 * h)

        np.testing.assert_allclose(fd, act.deriv(x), atol=1e-6)

    def test_derivative_bounded_by_peak(self):
        act = SmoothActivation(r=7)
        x = np.linspace(-1.0, 1.0, 20001)

        slopes = act.deriv(x)

        assert slopes.min() >= 0.0
        assert slopes.max() <= 25.0 / 9.0 + 1e-12

    def test_converges_to_relu_on_grid(self):
        grid = np.array([-1.0, -0.1, 0.0, 0.01, 0.1, 1.0])
        relu = np.maximum(grid, 0.0)
        indicator = (grid > 0.0).astype(float)

        errors = [
            np.max(np.abs(SmoothActivation(r=10 ** k).value(grid) - relu))
            + np.max(np.abs(SmoothActivation(r=10 ** k).deriv(grid) - indicator))
            for k in range(1, 6)
        ]

        assert errors[-1] == 0.0
        assert all(later <= earlier for earlier, later in zip(errors, errors[1:]))

    def test_rejects_non_positive_index(self):
        with pytest.raises(ValueError):
            SmoothActivation(r=0)


class TestQuadrature:
    def test_rules_are_cached_and_read_only(self):
        nodes, weights = gauss_legendre(16)

        assert gauss_legendre(16)[0] is nodes
        assert weights.sum() == pytest.approx(2.0, rel=1e-14)
        with pytest.raises(ValueError):
            nodes[0] = 0.0

    def test_fixed_rule_is_exact_for_polynomials(self):
        value = fixed_rule(lambda x: 7.0 * x ** 9 - x ** 2, -1.0, 2.0, 16)

        assert float(value) == pytest.approx(7.0 * (2.0 ** 10 - 1.0) / 10.0 - 3.0, rel=1e-14)

    def test_adaptive_handles_kinked_integrands(self):
        value = adaptive_gauss_legendre(lambda x: np.abs(x - 0.3), 0.0, 1.0)

        assert float(value) == pytest.approx(0.5 * (0.3 ** 2 + 0.7 ** 2), abs=1e-12)

    def test_vector_valued_integrand(self):
        value = adaptive_gauss_legendre(lambda x: np.column_stack([np.ones_like(x), x, np.cos(x)]), 0.0, 1.0)

        np.testing.assert_allclose(value, [1.0, 0.5, np.sin(1.0)], rtol=1e-13)


class TestSmoothedRisk:
    def test_kink_at_domain_end_has_small_bias(self, smoothed_service, identity_target, unit_domain):
        assert smoothed_service.smoothed_risk(theta_of(1, 0, 1, 0), identity_target, unit_domain, 1000) < 1e-3

    @pytest.mark.parametrize('r', [1, 10, 1000])
    def test_unreachable_window_leaves_risk_unchanged(self, smoothed_service, identity_target, unit_domain, r):
        value = smoothed_service.smoothed_risk(theta_of(0, -1, 5, 0.5), identity_target, unit_domain, r)

        assert value == pytest.approx(1.0 / 12.0, rel=1e-13)

    def test_requires_univariate_input(self, smoothed_service, identity_target, unit_domain):
        theta = ParamVector.zeros(NetworkShape(d=3, H=2))

        with pytest.raises(DimensionError):
            smoothed_service.smoothed_risk(theta, identity_target, unit_domain, 10)

    def test_edges_include_window_preimages_and_knots(self, unit_domain):
        target = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.9, slope=1.0, intercept=0.0),
            TargetPiece(x_lo=0.9, x_hi=1.0, slope=0.0, intercept=0.9),
        ))

        edges = smoothing_edges(theta_of(1.0, -0.5, 1.0, 0.0), target, unit_domain, SmoothActivation(r=10))

        np.testing.assert_allclose(edges, [0.0, 0.55, 0.6, 0.9, 1.0])

    def test_risk_error_decreases_with_r(self, smoothed_service, identity_target, unit_domain):
        errors = smoothed_service.gradient_limit_errors(theta_of(1.0, -0.5, 1.0, 0.0), identity_target, unit_domain)

        risk_errors = [e.risk_error for e in errors]
        assert all(later <= earlier + 1e-12 for earlier, later in zip(risk_errors, risk_errors[1:]))
        assert risk_errors[-1] < 1e-8


class TestSmoothedGradient:
    def test_constant_residual(self, smoothed_service, identity_target, unit_domain):
        grad = smoothed_service.smoothed_gradient(theta_of(1, 0, 1, 1), identity_target, unit_domain, 10 ** 4)

        np.testing.assert_allclose(grad, [1.0, 2.0, 1.0, 2.0], atol=1e-3)

    def test_inactive_neuron_has_zero_rows(self, smoothed_service, identity_target, unit_domain):
        # Arrange: preactivation stays below -0.5 on [0, 1]
        theta = ParamVector.from_parts([1.0, -1.0], [-1.5, 0.4], [2.0, 0.3], 0.1)

        # Act
        grad = smoothed_service.smoothed_gradient(theta, identity_target, unit_domain, 100)

        # Assert
        assert (grad[0], grad[2], grad[4]) == (0.0, 0.0, 0.0)

    @pytest.mark.parametrize('r', [10, 100])
    def test_matches_finite_differences(self, smoothed_service, identity_target, unit_domain, random_theta, r):
        for H in (1, 2, 3):
            for _ in range(5):
                theta = random_theta(H)

                fd = smoothed_service.finite_difference_gradient(theta, identity_target, unit_domain, r)
                grad = smoothed_service.smoothed_gradient(theta, identity_target, unit_domain, r)

                np.testing.assert_allclose(fd, grad, atol=1e-5)

    def test_gradient_error_decreases_with_r(self, smoothed_service, identity_target, unit_domain):
        errors = smoothed_service.gradient_limit_errors(theta_of(1.0, -0.5, 1.0, 0.0), identity_target, unit_domain)

        gradient_errors = [e.gradient_error for e in errors]
        assert all(later <= earlier + 1e-12 for earlier, later in zip(gradient_errors, gradient_errors[1:]))

    def test_converges_to_generalized_gradient(self, smoothed_service, exact_service, identity_target, unit_domain,
                                                well_separated_theta):
        for H in (1, 2, 4):
            for _ in range(10):
                # Arrange
                theta = well_separated_theta(H)
                grad_norm = exact_service.report(theta, identity_target, unit_domain).grad_norm

                # Act
                errors = smoothed_service.gradient_limit_errors(theta, identity_target, unit_domain)

                # Assert
                assert errors[-1].gradient_error < 1e-2 * (1.0 + grad_norm)
                assert errors[-1].gradient_error <= errors[0].gradient_error
                assert errors[-1].risk_error <= errors[0].risk_error


class TestGradientLimitErrors:
    def test_measures_against_injected_evaluator(self, mock_risk_evaluator, identity_target, unit_domain):
        # Arrange: pretend the exact objects are all zero
        mock_risk_evaluator.report.return_value = RiskReport(risk=0.0, gradient=(0.0,) * 4, grad_norm=0.0)
        service = SmoothedRiskService(exact_risk=mock_risk_evaluator)
        theta = theta_of(0, -1, 5, 0.5)

        # Act
        errors = service.gradient_limit_errors(theta, identity_target, unit_domain, rs=(10, 20))

        # Assert
        mock_risk_evaluator.report.assert_called_once_with(theta, identity_target, unit_domain)
        assert [e.r for e in errors] == [10, 20]
        assert errors[0].risk_error == pytest.approx(1.0 / 12.0)
        assert errors[0].gradient_error == pytest.approx(
            np.linalg.norm(service.smoothed_gradient(theta, identity_target, unit_domain, 10))
        )


class TestSmoothingContainer:
    def test_wires_the_exact_service(self):
        service = smoothing_container.smoothed_risk_service()

        assert isinstance(service, SmoothedRiskService)
        assert service.exact_risk is smoothing_container.risk.exact_risk_service()

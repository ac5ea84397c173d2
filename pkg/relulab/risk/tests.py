import numpy as np
import pytest

from relulab.exceptions import DimensionError, DomainMismatchError
from network.models import ActivationConvention, DomainMeasure, NetworkShape, ParamVector, Target, TargetPiece
from network.services import exact_fit
from risk.containers import risk_container
from risk.models import FiniteDifferenceVerdict
from risk.oracles import QuadratureRiskOracle
from risk.services import ExactRiskService, refinement_edges


def theta_of(w, b, v, c):
    return ParamVector.from_parts([w], [b], [v], c)


class TestRisk:
    def test_exact_fit_has_zero_risk(self, risk_service, identity_target, unit_domain):
        assert risk_service.risk(theta_of(1, 0, 1, 0), identity_target, unit_domain) == 0.0

    def test_constant_offset(self, risk_service, identity_target, unit_domain):
        assert risk_service.risk(theta_of(1, 0, 1, 1), identity_target, unit_domain) == pytest.approx(1.0, rel=1e-14)

    def test_best_constant_fit(self, risk_service, identity_target, unit_domain):
        value = risk_service.risk(theta_of(0, 0, 0, 0.5), identity_target, unit_domain)

        assert value == pytest.approx(1.0 / 12.0, rel=1e-14)

    def test_scales_linearly_in_density(self, risk_service, random_instance):
        theta, target, dom = random_instance(H=3)
        heavier = DomainMeasure(a=dom.a, b=dom.b, rho=3.0 * dom.rho)

        assert risk_service.risk(theta, target, heavier) == pytest.approx(3.0 * risk_service.risk(theta, target, dom))

    def test_piecewise_target_matches_oracle(self, risk_service, unit_domain, rng):
        # Arrange: hat target with a knot at 0.4
        target = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.4, slope=2.5, intercept=0.0),
            TargetPiece(x_lo=0.4, x_hi=1.0, slope=-1.0, intercept=1.4),
        ))
        for _ in range(10):
            theta = ParamVector.from_array(NetworkShape(d=1, H=3), rng.standard_normal(10))
            oracle = QuadratureRiskOracle(theta, target, unit_domain)

            # Act / Assert
            assert risk_service.risk(theta, target, unit_domain) == pytest.approx(oracle.risk(), rel=1e-10, abs=1e-12)
            np.testing.assert_allclose(
                risk_service.gradient(theta, target, unit_domain), oracle.gradient(), rtol=1e-9, atol=1e-10
            )

    def test_requires_univariate_input(self, risk_service, identity_target, unit_domain):
        theta = ParamVector.zeros(NetworkShape(d=2, H=1))

        with pytest.raises(DimensionError):
            risk_service.risk(theta, identity_target, unit_domain)

    def test_target_must_cover_domain(self, risk_service, unit_domain):
        target = Target.affine(1.0, 0.0, DomainMeasure(a=0.0, b=2.0))

        with pytest.raises(DomainMismatchError):
            risk_service.risk(theta_of(1, 0, 1, 0), target, unit_domain)

    def test_refinement_contains_kinks_and_knots(self, unit_domain):
        target = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.3, slope=1.0, intercept=0.0),
            TargetPiece(x_lo=0.3, x_hi=1.0, slope=0.0, intercept=0.3),
        ))

        edges = refinement_edges(theta_of(2, -1, 1, 0), target, unit_domain)

        np.testing.assert_allclose(edges, [0.0, 0.3, 0.5, 1.0])


class TestGradient:
    def test_zero_residual_gives_zero_gradient(self, risk_service, identity_target, unit_domain):
        grad = risk_service.gradient(theta_of(1, 0, 1, 0), identity_target, unit_domain)

        np.testing.assert_array_equal(grad, np.zeros(4))

    def test_constant_residual(self, risk_service, identity_target, unit_domain):
        grad = risk_service.gradient(theta_of(1, 0, 1, 1), identity_target, unit_domain)

        np.testing.assert_allclose(grad, [1.0, 2.0, 1.0, 2.0], rtol=1e-14)

    def test_inactive_neuron_has_zero_rows(self, risk_service, identity_target, unit_domain):
        grad = risk_service.gradient(theta_of(0, -1, 5, 0.3), identity_target, unit_domain)

        np.testing.assert_array_equal(grad[:3], [0.0, 0.0, 0.0])

    def test_report_is_consistent(self, risk_service, random_instance):
        theta, target, dom = random_instance(H=4)

        report = risk_service.report(theta, target, dom)

        assert report.risk == risk_service.risk(theta, target, dom)
        np.testing.assert_array_equal(report.gradient_array, risk_service.gradient(theta, target, dom))
        assert report.grad_norm == pytest.approx(np.linalg.norm(report.gradient_array))

    @pytest.mark.parametrize('H', [1, 2, 4, 8])
    def test_matches_quadrature_oracle(self, risk_service, random_instance, H):
        for _ in range(25):
            # Arrange
            theta, target, dom = random_instance(H)
            oracle = QuadratureRiskOracle(theta, target, dom)

            # Act
            report = risk_service.report(theta, target, dom)

            # Assert
            assert report.risk == pytest.approx(oracle.risk(), rel=1e-10, abs=1e-12)
            np.testing.assert_allclose(report.gradient_array, oracle.gradient(), rtol=1e-9, atol=1e-10)

    def test_scales_linearly_in_density(self, risk_service, random_instance):
        theta, target, dom = random_instance(H=2)
        lighter = DomainMeasure(a=dom.a, b=dom.b, rho=0.5 * dom.rho)

        np.testing.assert_allclose(
            risk_service.gradient(theta, target, lighter),
            0.5 * risk_service.gradient(theta, target, dom),
            rtol=1e-13, atol=1e-15,
        )

    def test_closed_convention_counts_flat_zero_neurons(self, risk_service, identity_target, unit_domain):
        # Arrange: neuron 1 has w = b = 0, so only the closed indicator sees it
        theta = ParamVector.from_parts([0.0, 1.0], [0.0, 0.0], [1.0, 1.0], 1.0)

        # Act
        strict = risk_service.gradient(theta, identity_target, unit_domain, ActivationConvention.STRICT)
        closed = risk_service.gradient(theta, identity_target, unit_domain, ActivationConvention.CLOSED)

        # Assert
        assert strict[0] == 0.0 and strict[2] == 0.0
        assert closed[0] == pytest.approx(1.0) and closed[2] == pytest.approx(2.0)
        np.testing.assert_array_equal(strict[[1, 3, 4, 5, 6]], closed[[1, 3, 4, 5, 6]])

    def test_norm_is_lower_semicontinuous_at_degenerate_points(self, risk_service, identity_target, unit_domain, rng):
        for _ in range(50):
            # Arrange: neuron 1 collapsed to w = b = 0 with v != 0
            base = rng.standard_normal(7)
            base[0] = base[2] = 0.0
            base[4] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
            shape = NetworkShape(d=1, H=2)
            theta = ParamVector.from_array(shape, base)
            limit_norm = risk_service.report(theta, identity_target, unit_domain).grad_norm
            direction = rng.standard_normal(7)

            # Act
            tail = [
                risk_service.report(ParamVector.from_array(shape, base + 2.0 ** -n * direction),
                                    identity_target, unit_domain).grad_norm
                for n in range(35, 46)
            ]

            # Assert
            assert min(tail) >= limit_norm - 1e-8


class TestFiniteDifferences:
    def test_matches_constant_residual_gradient(self, risk_service, identity_target, unit_domain):
        fd = risk_service.finite_difference_gradient(theta_of(1, 0, 1, 1), identity_target, unit_domain, h=1e-6)

        np.testing.assert_allclose(fd, [1.0, 2.0, 1.0, 2.0], atol=1e-5)

    def test_vanishes_at_exact_fit(self, risk_service, identity_target, unit_domain):
        fd = risk_service.finite_difference_gradient(theta_of(1, 0, 1, 0), identity_target, unit_domain, h=1e-6)

        np.testing.assert_allclose(fd, np.zeros(4), atol=1e-6)

    def test_rejects_non_positive_step(self, risk_service, identity_target, unit_domain):
        with pytest.raises(ValueError):
            risk_service.finite_difference_gradient(theta_of(1, 0, 1, 0), identity_target, unit_domain, h=0.0)

    def test_agrees_where_risk_is_differentiable(self, risk_service, random_instance):
        for H in (1, 2, 4, 8):
            for _ in range(10):
                theta, target, dom = random_instance(H)

                check = risk_service.finite_difference_check(theta, target, dom)

                assert check.verdict is FiniteDifferenceVerdict.AGREES, check

    def test_degenerate_point_is_reported_not_raised(self, risk_service, identity_target, unit_domain):
        theta = ParamVector.from_parts([0.0, 1.0], [0.0, -0.2], [2.0, 1.0], 0.7)

        check = risk_service.finite_difference_check(theta, identity_target, unit_domain)

        assert check.verdict is FiniteDifferenceVerdict.EXCLUDED


class TestGradientNormBound:
    def test_zero_at_exact_fit(self, risk_service, identity_target, unit_domain):
        check = risk_service.gradient_norm_bound_check(theta_of(1, 0, 1, 0), identity_target, unit_domain)

        assert (check.lhs, check.rhs, check.ok) == (0.0, 0.0, True)

    def test_constant_residual_example(self, risk_service, identity_target, unit_domain):
        check = risk_service.gradient_norm_bound_check(theta_of(1, 0, 1, 1), identity_target, unit_domain)

        assert check.lhs == pytest.approx(10.0)
        assert check.rhs == pytest.approx(28.0)
        assert check.ok

    def test_holds_on_random_parameters(self, risk_service, random_instance):
        for _ in range(1000):
            theta, target, dom = random_instance(H=int(1 + _ % 4))

            assert risk_service.gradient_norm_bound_check(theta, target, dom).ok


class TestResidualMoments:
    def test_exact_fit_has_no_moments(self, risk_service, unit_domain):
        theta = exact_fit(NetworkShape(d=1, H=2), 2.0, -1.0, unit_domain)

        moments = risk_service.residual_moments(theta, Target.affine(2.0, -1.0, unit_domain), unit_domain)

        assert moments.zeroth == pytest.approx(0.0, abs=1e-14)
        assert moments.first == pytest.approx(0.0, abs=1e-14)
        assert moments.target == pytest.approx(0.0, abs=1e-14)

    def test_constant_offset_moments(self, risk_service, identity_target, unit_domain):
        moments = risk_service.residual_moments(theta_of(1, 0, 1, 1), identity_target, unit_domain)

        assert moments.zeroth == pytest.approx(1.0)
        assert moments.first == pytest.approx(0.5)
        assert moments.target == pytest.approx(0.5)


class TestRiskContainer:
    def test_provides_a_single_exact_service(self):
        first = risk_container.exact_risk_service()

        assert isinstance(first, ExactRiskService)
        assert first is risk_container.exact_risk_service()

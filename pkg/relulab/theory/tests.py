import numpy as np
import pytest
from pydantic import ValidationError

from relulab.exceptions import AmbiguousClassificationError, DomainMismatchError, ShapeError
from network.models import DomainMeasure, NetworkShape, ParamVector, Target, TargetPiece
from network.services import exact_fit
from risk.services import ExactRiskService
from theory.containers import theory_container
from theory.models import ZERO, DiagnosticStatus, RiskLadder, Rung
from theory.services import (
    TheoryService,
    affine_moment_solve,
    best_constant_risk,
    classify_terminal_risk,
    constant_fit_risk,
    critical_ladder,
    mean_target,
    small_risk_threshold,
    uniform_error,
)


def theta_of(w, b, v, c):
    return ParamVector.from_parts([w], [b], [v], c)


class TestBestConstantRisk:
    def test_identity_on_unit_interval(self, identity_target, unit_domain):
        assert best_constant_risk(identity_target, unit_domain) == pytest.approx(1.0 / 12.0, rel=1e-14)

    def test_constant_target(self, unit_domain):
        assert best_constant_risk(Target.affine(0.0, 4.2, unit_domain), unit_domain) == 0.0

    def test_steeper_target(self, unit_domain):
        assert best_constant_risk(Target.affine(2.0, 3.0, unit_domain), unit_domain) == pytest.approx(1.0 / 3.0)

    def test_matches_ladder_top_for_affine_targets(self, rng):
        for _ in range(100):
            # Arrange
            alpha, beta = rng.normal(scale=3.0, size=2)
            a = rng.uniform(-5.0, 5.0)
            dom = DomainMeasure(a=a, b=a + rng.uniform(0.1, 4.0), rho=rng.uniform(0.1, 5.0))

            # Act
            value = best_constant_risk(Target.affine(alpha, beta, dom), dom)

            # Assert
            assert value == pytest.approx(dom.rho * alpha ** 2 * dom.length ** 3 / 12.0, rel=1e-9)

    def test_piecewise_target(self, unit_domain):
        # Arrange: tent with peak 1 at 0.5, mean 1/2
        target = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.5, slope=2.0, intercept=0.0),
            TargetPiece(x_lo=0.5, x_hi=1.0, slope=-2.0, intercept=2.0),
        ))

        # Act / Assert
        assert mean_target(target, unit_domain) == pytest.approx(0.5)
        assert best_constant_risk(target, unit_domain) == pytest.approx(1.0 / 12.0)

    def test_constant_fit_risk_grows_away_from_mean(self, identity_target, unit_domain):
        at_mean = constant_fit_risk(identity_target, unit_domain, 0.5)
        shifted = constant_fit_risk(identity_target, unit_domain, 0.8)

        assert shifted == pytest.approx(at_mean + 0.09)

    def test_target_must_cover_domain(self, identity_target):
        with pytest.raises(DomainMismatchError):
            mean_target(identity_target, DomainMeasure(a=-1.0, b=1.0))


class TestCriticalLadder:
    def test_width_one(self):
        ladder = critical_ladder(1, 1.0, 0.0, 1.0, 1.0)

        assert [(r.n, r.value) for r in ladder.rungs] == [(0, pytest.approx(1.0 / 12.0)), (None, 0.0)]

    def test_width_two(self, ladder_h2):
        assert [r.label for r in ladder_h2.rungs] == ['0', '2', ZERO]
        assert ladder_h2.rungs[1].value == pytest.approx(1.0 / 972.0, rel=1e-14)

    def test_zero_slope_collapses(self):
        ladder = critical_ladder(4, 0.0, 0.0, 1.0, 1.0)

        assert ladder.rungs == (Rung(n=None, value=0.0),)

    @pytest.mark.parametrize('H', [1, 2, 3, 4, 7, 10])
    def test_minimum_positive_rung_is_the_small_risk_threshold(self, H):
        ladder = critical_ladder(H, 1.5, -1.0, 2.0, 0.7)

        assert ladder.min_positive == small_risk_threshold(H, 1.5, -1.0, 2.0, 0.7)
        assert ladder.min_positive == pytest.approx(0.7 * 2.25 * 27.0 / (12.0 * (2 * (H // 2) + 1) ** 4))

    def test_values_strictly_decrease(self):
        values = [r.value for r in critical_ladder(9, 1.0, 0.0, 1.0).rungs]

        assert all(later < earlier for earlier, later in zip(values, values[1:]))

    def test_rejects_unsorted_rungs(self):
        with pytest.raises(ValidationError):
            RiskLadder(
                rungs=(Rung(n=2, value=0.1), Rung(n=0, value=0.2), Rung(value=0.0)),
                H=2, alpha=1.0, a=0.0, b=1.0, rho=1.0,
            )

    def test_rejects_empty_domain(self):
        with pytest.raises(ValueError):
            critical_ladder(2, 1.0, 1.0, 1.0)


class TestClassifyTerminalRisk:
    def test_lands_on_second_rung(self, ladder_h2):
        rung = classify_terminal_risk(1.0 / 972.0 + 3e-9, ladder_h2, tol=1e-6)

        assert rung is not None and rung.n == 2

    def test_zero(self, ladder_h2):
        rung = classify_terminal_risk(0.0, ladder_h2)

        assert rung is not None and rung.label == ZERO

    def test_between_rungs(self, ladder_h2):
        assert classify_terminal_risk(0.05, ladder_h2, tol=1e-6) is None

    def test_wide_tolerance_is_ambiguous(self, ladder_h2):
        with pytest.raises(AmbiguousClassificationError):
            classify_terminal_risk(0.0005, ladder_h2, tol=6e-4)

    def test_rejects_non_positive_tolerance(self, ladder_h2):
        with pytest.raises(ValueError):
            classify_terminal_risk(0.0, ladder_h2, tol=0.0)


class TestAffineMomentSolve:
    def test_vanishing_moments_force_zero(self):
        slope, intercept = affine_moment_solve(0.0, 0.0, -0.3, 2.0)

        assert (slope, intercept) == (0.0, 0.0)

    def test_recovers_random_affine_functions(self, rng):
        for _ in range(100):
            # Arrange
            p, q = rng.normal(size=2)
            a = rng.uniform(-3.0, 3.0)
            b = a + rng.uniform(0.2, 3.0)
            zeroth = p * (b ** 2 - a ** 2) / 2.0 + q * (b - a)
            first = p * (b ** 3 - a ** 3) / 3.0 + q * (b ** 2 - a ** 2) / 2.0

            # Act
            slope, intercept = affine_moment_solve(zeroth, first, a, b)

            # Assert
            assert slope == pytest.approx(p, abs=1e-9)
            assert intercept == pytest.approx(q, abs=1e-9)

    def test_matches_residual_moments(self, identity_target, unit_domain):
        # Arrange: residual 0.5 x + 0.25 of the active affine network
        theta = theta_of(1.0, 0.0, 1.5, 0.25)
        moments = ExactRiskService().residual_moments(theta, identity_target, unit_domain)

        # Act
        slope, intercept = affine_moment_solve(moments.zeroth, moments.first, 0.0, 1.0)

        # Assert
        assert slope == pytest.approx(0.5)
        assert intercept == pytest.approx(0.25)


class TestUniformError:
    def test_exact_fit(self, identity_target, unit_domain):
        assert uniform_error(theta_of(1, 0, 1, 0), identity_target, unit_domain) == 0.0

    def test_constant_residual(self, identity_target, unit_domain):
        assert uniform_error(theta_of(1, 0, 1, 1), identity_target, unit_domain) == pytest.approx(1.0)

    def test_attained_at_domain_end(self, identity_target, unit_domain):
        assert uniform_error(theta_of(2, 0, 1, 0), identity_target, unit_domain) == pytest.approx(1.0)

    def test_attained_at_kink(self, unit_domain):
        # Arrange: N = max(x - 0.5, 0) against f = 0 peaks at either end; against a tent it peaks at the kink
        tent = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.5, slope=1.0, intercept=0.0),
            TargetPiece(x_lo=0.5, x_hi=1.0, slope=-1.0, intercept=1.0),
        ))

        # Act
        value = uniform_error(theta_of(1.0, -0.5, -1.0, 0.0), tent, unit_domain)

        # Assert
        assert value == pytest.approx(0.5)


class TestTheoryService:
    def test_is_critical_at_exact_fit(self, theory_service, identity_target, unit_domain):
        theta = exact_fit(NetworkShape(d=1, H=3), 1.0, 0.0, unit_domain)

        assert theory_service.is_critical(theta, identity_target, unit_domain)

    def test_not_critical_with_constant_residual(self, theory_service, identity_target, unit_domain):
        assert not theory_service.is_critical(theta_of(1, 0, 1, 1), identity_target, unit_domain)

    def test_dead_network_is_critical(self, theory_service, identity_target, unit_domain):
        # All neurons off and c at the mean: only the constant fit rung is reachable
        theta = ParamVector.from_parts([1.0, -1.0], [-2.0, -3.0], [0.4, 0.9], 0.5)

        assert theory_service.is_critical(theta, identity_target, unit_domain)


class TestSmallRiskDiagnostics:
    def test_exact_fit(self, theory_service, unit_domain):
        # Act
        report = theory_service.small_risk_diagnostics(theta_of(1, 0, 1, 0), 1.0, 0.0, unit_domain)

        # Assert
        assert report.risk == 0.0
        assert report.sign is DiagnosticStatus.OK
        assert report.active is DiagnosticStatus.OK
        assert report.slope_product == 1.0
        assert report.slope_lower_bound == pytest.approx(np.sqrt(1.0 / 12.0))
        assert report.slope is DiagnosticStatus.OK

    def test_large_risk_is_not_applicable(self, theory_service, unit_domain):
        report = theory_service.small_risk_diagnostics(theta_of(0, -1, 5, 0.5), 1.0, 0.0, unit_domain)

        assert report.risk == pytest.approx(1.0 / 12.0)
        assert report.sign is DiagnosticStatus.NOT_APPLICABLE
        assert report.active is DiagnosticStatus.NOT_APPLICABLE
        assert report.slope_lower_bound is None

    def test_left_pointing_neuron(self, theory_service, unit_domain):
        # Arrange: N = 1 - max(0.5 - x, 0)
        theta = theta_of(-1.0, 0.5, -1.0, 1.0)

        # Act
        report = theory_service.small_risk_diagnostics(theta, 1.0, 0.0, unit_domain)

        # Assert: residual 1/2 on [0, 1/2] and 1 - x beyond, so the risk sits above 1/12
        assert report.risk == pytest.approx(1.0 / 6.0, rel=1e-12)
        assert report.slope_product == 1.0
        assert report.sign is DiagnosticStatus.NOT_APPLICABLE
        assert report.active is DiagnosticStatus.NOT_APPLICABLE

    def test_requires_width_one(self, theory_service, unit_domain):
        with pytest.raises(ShapeError):
            theory_service.small_risk_diagnostics(ParamVector.zeros(NetworkShape(d=1, H=2)), 1.0, 0.0, unit_domain)

    def test_uses_injected_evaluator(self, mock_risk_evaluator, unit_domain):
        # Arrange
        mock_risk_evaluator.risk.return_value = 0.5
        service = TheoryService(risk_evaluator=mock_risk_evaluator)

        # Act
        report = service.small_risk_diagnostics(theta_of(1, 0, -1, 0), 1.0, 0.0, unit_domain)

        # Assert
        mock_risk_evaluator.risk.assert_called_once()
        assert report.sign is DiagnosticStatus.NOT_APPLICABLE

    def test_no_violations_on_random_parameters(self, theory_service, rng):
        dom = DomainMeasure(a=0.0, b=1.0, rho=1.0)
        applicable = 0
        for _ in range(2000):
            theta = ParamVector.from_array(NetworkShape(d=1, H=1), rng.normal(scale=1.5, size=4))
            alpha, beta = 1.0, 0.0

            report = theory_service.small_risk_diagnostics(theta, alpha, beta, dom)

            assert report.violations == []
            applicable += report.sign is not DiagnosticStatus.NOT_APPLICABLE
        assert applicable > 0


class TestTheoryContainer:
    def test_wires_the_exact_service(self):
        service = theory_container.theory_service()

        assert service.risk_evaluator is theory_container.risk.exact_risk_service()

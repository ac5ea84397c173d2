import numpy as np
import pytest
from pydantic import ValidationError

from relulab.exceptions import DimensionError, NonFiniteStateError, SolverError, StepSizeUnderflowError
from network.models import DomainMeasure, NetworkShape, ParamVector, Target
from network.services import exact_fit
from flow.conftest import ToySystem
from flow.containers import flow_container
from flow.models import ConditionalStatus, FlowConfig
from flow.monitors import (
    boundedness_check,
    conditional_convergence_check,
    conservation_drift,
    energy_residual,
    limsup_bound_check,
    lyapunov_check,
    lyapunov_identity_residual,
    monotonicity_violation,
)
from flow.services import GradientFlowService
from flow.solver import RungeKuttaFehlberg
from theory.services import best_constant_risk, uniform_error


def theta_of(w, b, v, c):
    return ParamVector.from_parts([w], [b], [v], c)


class TestFlowConfig:
    def test_defaults_are_valid(self):
        cfg = FlowConfig()

        assert cfg.dt_min <= cfg.dt_init <= cfg.dt_max

    def test_rejects_zero_tolerance(self):
        with pytest.raises(ValidationError, match='rk_tol'):
            FlowConfig(rk_tol=0.0)

    def test_rejects_unordered_steps(self):
        with pytest.raises(ValidationError):
            FlowConfig(dt_min=1e-2, dt_init=1e-3)

    def test_rejects_unknown_keys(self):
        with pytest.raises(ValidationError):
            FlowConfig(t_final=3.0)


class TestVectorField:
    def test_vanishes_at_exact_fit(self, flow_service, identity_target, unit_domain):
        field = flow_service.vector_field(theta_of(1, 0, 1, 0), identity_target, unit_domain)

        np.testing.assert_array_equal(field, np.zeros(4))

    def test_negates_the_gradient(self, flow_service, identity_target, unit_domain):
        field = flow_service.vector_field(theta_of(1, 0, 1, 1), identity_target, unit_domain)

        np.testing.assert_allclose(field, [-1.0, -2.0, -1.0, -2.0], rtol=1e-14)

    def test_doubles_with_density(self, flow_service, random_start):
        theta = random_start(3, 5)
        light = DomainMeasure(a=-1.0, b=2.0, rho=0.75)
        heavy = DomainMeasure(a=-1.0, b=2.0, rho=1.5)
        target = Target.affine(0.5, -0.2, light)

        np.testing.assert_allclose(
            flow_service.vector_field(theta, target, heavy),
            2.0 * flow_service.vector_field(theta, target, light),
            rtol=1e-13, atol=1e-15,
        )

    def test_requires_univariate_input(self, flow_service, identity_target, unit_domain):
        with pytest.raises(DimensionError):
            flow_service.vector_field(ParamVector.zeros(NetworkShape(d=2, H=1)), identity_target, unit_domain)


class TestSolver:
    def test_steps_exactly_onto_the_switching_surface(self, toy_system):
        # Arrange
        cfg = FlowConfig(t_end=1.0, dt_init=0.1, dt_min=1e-14, dt_max=1.0, rk_tol=1e-10)

        # Act
        stats = RungeKuttaFehlberg(cfg).solve(toy_system, np.array([0.0]))

        # Assert
        assert stats.events == 1
        assert toy_system.crossings[0] == pytest.approx(0.35, abs=1e-10)
        t_last, y_last = toy_system.accepted[-1]
        assert t_last == 1.0
        assert y_last == pytest.approx(1.65, abs=1e-10)

    def test_accepted_times_increase(self, toy_system):
        cfg = FlowConfig(t_end=2.0, dt_init=0.05, dt_min=1e-14, dt_max=0.3)

        RungeKuttaFehlberg(cfg).solve(toy_system, np.array([0.0]))

        times = [t for t, _ in toy_system.accepted]
        assert times[0] == 0.0
        assert all(later > earlier for earlier, later in zip(times, times[1:]))

    def test_step_size_underflow(self):
        # Arrange: y' = -1000 y cannot be integrated with steps of at least 1
        class Stiff(ToySystem):
            def derivative(self, y):
                return -1000.0 * y

            def signature(self, y):
                return np.zeros(1)

        cfg = FlowConfig(t_end=10.0, dt_init=1.0, dt_min=1.0, dt_max=1.0)

        # Act / Assert
        with pytest.raises(StepSizeUnderflowError) as raised:
            RungeKuttaFehlberg(cfg).solve(Stiff(), np.array([1.0]))
        assert raised.value.t == 0.0
        np.testing.assert_array_equal(raised.value.state, [1.0])

    def test_non_finite_state(self):
        class Exploding(ToySystem):
            def derivative(self, y):
                return np.array([np.inf])

        with pytest.raises(NonFiniteStateError):
            RungeKuttaFehlberg(FlowConfig(t_end=1.0)).solve(Exploding(), np.array([0.0]))

    def test_step_budget(self, toy_system):
        cfg = FlowConfig(t_end=1e6, dt_init=1e-3, dt_min=1e-12, dt_max=1e-3, max_steps=5)

        with pytest.raises(SolverError, match='budget'):
            RungeKuttaFehlberg(cfg).solve(toy_system, np.array([0.0]))


class TestIntegrate:
    def test_exact_fit_is_stationary(self, flow_service, identity_target, unit_domain, tight_config):
        # Arrange
        theta0 = exact_fit(NetworkShape(d=1, H=2), 1.0, 0.0, unit_domain)

        # Act
        traj = flow_service.integrate(theta0, identity_target, unit_domain, tight_config)

        # Assert
        assert traj.times[0] == 0.0 and traj.times[-1] == tight_config.t_end
        np.testing.assert_array_equal(traj.risk, np.zeros(len(traj)))
        np.testing.assert_array_equal(traj.params, np.tile(theta0.array, (len(traj), 1)))
        assert traj.events == ()
        assert energy_residual(traj) == 0.0

    def test_default_xi_is_target_mean(self, flow_service, identity_target, unit_domain):
        traj = flow_service.integrate(theta_of(1, 0, 1, 1), identity_target, unit_domain, FlowConfig(t_end=0.5))

        assert traj.xi == pytest.approx(0.5)
        assert traj.V[0] == pytest.approx(3.0 + (1.0 - 1.0) ** 2)

    def test_records_every_series(self, flow_service, identity_target, unit_domain, random_start):
        traj = flow_service.integrate(random_start(2, 1), identity_target, unit_domain, FlowConfig(t_end=2.0))

        n = len(traj)
        assert traj.params.shape == (n, 7)
        assert traj.W.shape == (n, 2)
        assert traj.stats.accepted == n - 1

    def test_short_run_follows_the_energy_identity(self, flow_service, identity_target, unit_domain, random_start):
        # Arrange
        cfg = FlowConfig(t_end=5.0, rk_tol=1e-11)

        for seed in range(3):
            # Act
            traj = flow_service.integrate(random_start(2, seed), identity_target, unit_domain, cfg)

            # Assert
            assert energy_residual(traj) <= 1e-6 * (1.0 + traj.risk[0])
            assert monotonicity_violation(traj) <= 1e-10 * (1.0 + traj.risk[0])
            assert lyapunov_identity_residual(traj) <= 1e-6 * (1.0 + traj.V[0])
            assert lyapunov_check(traj).ok

    def test_kink_leaving_the_domain_is_an_event(self, flow_service, unit_domain):
        # Arrange: the only neuron is active on [0, 0.2), where it bends N away from the flat target
        target = Target.affine(0.0, 1.0, unit_domain)
        theta0 = theta_of(-1.0, 0.2, -2.0, 1.0)
        cfg = FlowConfig(t_end=20.0, rk_tol=1e-11)

        # Act
        traj = flow_service.integrate(theta0, target, unit_domain, cfg)

        # Assert
        assert traj.stats.events == len(traj.events)
        for event in traj.events:
            assert event.neurons == (1,)
            assert event.t in traj.times

    def test_requires_univariate_input(self, flow_service, identity_target, unit_domain):
        with pytest.raises(DimensionError):
            flow_service.integrate(ParamVector.zeros(NetworkShape(d=2, H=1)), identity_target, unit_domain, FlowConfig())

    @pytest.mark.slow
    def test_width_one_reaches_zero_risk(self, flow_service, identity_target, unit_domain):
        # Arrange: the kink at k relaxes like k' ~ -k^2 / (1 + w^2) and sup|N - f| ~ k,
        # so 1e-3 needs t of a few thousand
        theta0 = theta_of(1.2, -0.05, 0.9, 0.05)
        cfg = FlowConfig(t_end=5000.0, dt_max=5.0, rk_tol=1e-12, dt_min=1e-14)

        # Act
        traj = flow_service.integrate(theta0, identity_target, unit_domain, cfg)

        # Assert
        assert traj.risk[0] < 1.0 / 12.0
        assert traj.risk[-1] < 1e-8
        assert uniform_error(traj.final, identity_target, unit_domain) < 1e-3
        assert monotonicity_violation(traj) <= 1e-10 * (1.0 + traj.risk[0])
        assert np.max(conservation_drift(traj)) <= 1e-8
        assert conditional_convergence_check(traj).status is ConditionalStatus.PASS

    def test_small_risk_starts_are_seeded(self, small_risk_start, risk_service, identity_target, unit_domain):
        starts = [small_risk_start(seed) for seed in range(10)]

        assert small_risk_start(3) == starts[3]
        for theta in starts:
            assert risk_service.risk(theta, identity_target, unit_domain) < 1.0 / 12.0 - 0.01

    @pytest.mark.slow
    @pytest.mark.parametrize('seed', range(10))
    def test_width_one_converges_from_small_risk_starts(self, flow_service, identity_target, unit_domain,
                                                        small_risk_start, seed):
        # Arrange
        theta0 = small_risk_start(seed)
        cfg = FlowConfig(t_end=4000.0, dt_max=5.0, rk_tol=1e-12, dt_min=1e-14)

        # Act
        traj = flow_service.integrate(theta0, identity_target, unit_domain, cfg)

        # Assert
        assert traj.risk[0] < 1.0 / 12.0 - 0.01
        assert traj.risk[-1] < 1e-8
        assert uniform_error(traj.final, identity_target, unit_domain) < 1e-3

    @pytest.mark.slow
    @pytest.mark.parametrize('seed', range(4))
    def test_random_runs_respect_every_bound(self, flow_service, identity_target, unit_domain, random_start,
                                             tight_config, seed):
        # Arrange
        theta0 = random_start(1 + seed % 4, 100 + seed)

        # Act
        traj = flow_service.integrate(theta0, identity_target, unit_domain, tight_config)

        # Assert
        assert np.max(conservation_drift(traj)) <= 1e-8
        assert energy_residual(traj) <= 1e-6 * (1.0 + traj.risk[0])
        assert lyapunov_check(traj).ok
        assert boundedness_check(traj).ok
        assert limsup_bound_check(traj).ok

    @pytest.mark.slow
    @pytest.mark.parametrize('seed', range(5))
    def test_matches_euler_oracle(self, flow_service, identity_target, unit_domain, random_start, euler_oracle, seed):
        # Arrange
        theta0 = random_start(2, 200 + seed)
        cfg = FlowConfig(t_end=1.0, rk_tol=1e-12, dt_min=1e-14)

        # Act
        traj = flow_service.integrate(theta0, identity_target, unit_domain, cfg)
        reference = euler_oracle(theta0, identity_target, unit_domain, t_end=1.0, dt=1e-5)

        # Assert
        assert np.linalg.norm(traj.final.array - reference.array) <= 1e-4

    @pytest.mark.slow
    def test_tighter_tolerance_shrinks_trapezoid_residual(self, flow_service, identity_target, unit_domain,
                                                           random_start):
        theta0 = random_start(2, 7)

        residuals = [
            energy_residual(
                flow_service.integrate(theta0, identity_target, unit_domain, FlowConfig(t_end=10.0, rk_tol=tol)),
                quadrature='trapezoid',
            )
            for tol in (1e-6, 1e-8, 1e-10)
        ]

        assert residuals[2] <= residuals[0]


class TestMonitors:
    def test_boundedness_bound_arithmetic(self, hand_trajectory):
        # Arrange: |theta(0)| = 1
        traj = hand_trajectory(times=[0.0, 1.0], params=[[1, 0, 0, 0], [0.5, 0, 0, 0]], risk=[0.5, 0.4])

        # Act
        check = boundedness_check(traj, xi=0.5)

        # Assert
        assert check.bound == pytest.approx(5.0)
        assert check.max_norm_while_above == pytest.approx(0.5)
        assert check.ok

    def test_boundedness_ignores_samples_below_nu(self, hand_trajectory):
        traj = hand_trajectory(
            times=[0.0, 1.0, 2.0],
            params=[[1, 0, 0, 0], [2, 0, 0, 0], [9, 0, 0, 0]],
            risk=[0.5, 0.2, 0.01],
        )

        check = boundedness_check(traj, xi=0.5)

        assert check.max_norm_while_above == pytest.approx(2.0)

    def test_boundedness_with_no_sample_above(self, hand_trajectory):
        traj = hand_trajectory(times=[0.0, 1.0], params=[[1, 0, 1, 0], [1, 0, 1, 0]], risk=[0.0, 0.0])

        check = boundedness_check(traj)

        assert (check.max_norm_while_above, check.ok) == (0.0, True)

    def test_lyapunov_at_stationary_minimum(self, hand_trajectory):
        row = [1.0, 0.0, 1.0, 0.0]
        traj = hand_trajectory(times=[0.0, 1.0, 2.0], params=[row, row, row], risk=[0.0, 0.0, 0.0])

        check = lyapunov_check(traj)

        assert check.max_violation <= 0.0
        assert check.ok

    def test_lyapunov_flags_growth(self, hand_trajectory):
        # Arrange: V jumps by 100 in one time unit while nu = 1/12
        traj = hand_trajectory(times=[0.0, 1.0], params=[[1, 0, 1, 0], [10, 0, 1, 0]], risk=[0.0, 0.0])

        # Act
        check = lyapunov_check(traj)

        # Assert
        assert check.max_violation == pytest.approx(99.0 - 4.0 / 12.0)
        assert not check.ok

    def test_energy_residual_of_consistent_samples(self, hand_trajectory):
        # L(t) = 1 - t with |G|^2 = 1
        traj = hand_trajectory(times=[0.0, 0.5, 1.0], params=[[0, 0, 0, 0]] * 3, risk=[1.0, 0.5, 0.0],
                               grad_norm=[1.0, 1.0, 1.0])

        assert energy_residual(traj) == pytest.approx(0.0, abs=1e-15)
        assert energy_residual(traj, quadrature='trapezoid') == pytest.approx(0.0, abs=1e-15)

    def test_conservation_drift(self, hand_trajectory):
        # W = w^2 + b^2 - v^2 goes 1 -> 2 -> 0
        traj = hand_trajectory(
            times=[0.0, 1.0, 2.0],
            params=[[1, 0, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0]],
            risk=[0.1, 0.1, 0.1],
        )

        drift = conservation_drift(traj)

        np.testing.assert_allclose(drift, [0.5])

    def test_monotonicity_violation(self, hand_trajectory):
        traj = hand_trajectory(times=[0.0, 1.0, 2.0, 3.0], params=[[0, 0, 0, 0]] * 4, risk=[1.0, 0.5, 0.7, 0.1])

        assert monotonicity_violation(traj) == pytest.approx(0.2)

    def test_limsup_against_constant_fit(self, hand_trajectory, identity_target, unit_domain):
        traj = hand_trajectory(times=[0.0, 1.0], params=[[0, 0, 0, 0]] * 2, risk=[0.3, 0.09])

        check = limsup_bound_check(traj)

        assert check.const_bound == pytest.approx(best_constant_risk(identity_target, unit_domain))
        assert not check.ok

    def test_conditional_not_applicable_above_threshold(self, hand_trajectory):
        traj = hand_trajectory(times=[0.0, 1.0], params=[[0, 0, 0, 0.5]] * 2, risk=[1.0 / 12.0, 1.0 / 12.0])

        check = conditional_convergence_check(traj)

        assert check.status is ConditionalStatus.NOT_APPLICABLE
        assert check.threshold == pytest.approx(1.0 / 12.0)

    def test_conditional_fails_when_stuck(self, hand_trajectory):
        traj = hand_trajectory(times=[0.0, 1.0], params=[[1, 0, 1, 0.1]] * 2, risk=[0.01, 0.01])

        check = conditional_convergence_check(traj)

        assert check.status is ConditionalStatus.FAIL

    def test_conditional_passes_at_zero(self, hand_trajectory):
        traj = hand_trajectory(times=[0.0, 1.0], params=[[1, 0, 1, 0.1], [1, 0, 1, 0]], risk=[0.01, 0.0])

        assert conditional_convergence_check(traj).status is ConditionalStatus.PASS


class TestFlowContainer:
    def test_wires_the_exact_service(self):
        service = flow_container.gradient_flow_service()

        assert isinstance(service, GradientFlowService)
        assert service.risk_evaluator is flow_container.risk.exact_risk_service()

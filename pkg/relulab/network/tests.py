import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from relulab.exceptions import DimensionError, NeuronIndexError
from network.models import (
    Breakpoints,
    DomainMeasure,
    Interval,
    NetworkShape,
    ParamVector,
    Target,
    TargetPiece,
)
from network.services import (
    active_interval,
    balancedness,
    breakpoints,
    exact_fit,
    exact_fit_linear,
    is_degenerate,
    lyapunov,
    parameter_norm,
    realization,
    segment_affine,
    symdiff_length,
)


def scalar_realization(w, b, v, c, x):
    """Independent evaluator written out neuron by neuron"""
    total = c
    for wi, bi, vi in zip(w, b, v):
        pre = wi * x + bi
        total += vi * (pre if pre > 0 else 0.0)
    return total


class TestParamVector:
    def test_dimension_counts_all_parameters(self):
        assert NetworkShape(d=1, H=1).dim == 4
        assert NetworkShape(d=3, H=5).dim == 3 * 5 + 2 * 5 + 1

    def test_views_follow_the_flat_layout(self):
        # Arrange
        shape = NetworkShape(d=2, H=2)
        theta = ParamVector.from_array(shape, np.arange(1.0, 10.0))

        # Act / Assert
        assert theta.w_at(1, 1) == 1.0
        assert theta.w_at(1, 2) == 2.0
        assert theta.w_at(2, 1) == 3.0
        assert theta.w_at(2, 2) == 4.0
        assert theta.b_at(1) == 5.0 and theta.b_at(2) == 6.0
        assert theta.v_at(1) == 7.0 and theta.v_at(2) == 8.0
        assert theta.c == 9.0

    def test_view_writes_round_trip_to_the_flat_vector(self, random_theta):
        # Arrange
        theta = random_theta(d=3, H=4)

        # Act
        rebuilt = ParamVector.from_parts(theta.w, theta.b, theta.v, theta.c)
        replaced = theta.replace(c=theta.c)

        # Assert
        assert rebuilt == theta
        assert replaced == theta

    def test_replace_changes_only_the_named_view(self, single_neuron):
        theta = single_neuron(1.0, 2.0, 3.0, 4.0)

        updated = theta.replace(b=[-1.0])

        assert updated.values == (1.0, -1.0, 3.0, 4.0)

    def test_wrong_length_is_rejected(self):
        with pytest.raises(ValidationError):
            ParamVector(shape=NetworkShape(d=1, H=2), values=(1.0, 2.0, 3.0))

    def test_neuron_index_outside_width_raises(self, single_neuron):
        theta = single_neuron(1.0, 0.0, 1.0, 0.0)

        with pytest.raises(NeuronIndexError):
            theta.b_at(2)


class TestDomainAndTarget:
    def test_domain_requires_increasing_bounds(self):
        with pytest.raises(ValidationError):
            DomainMeasure(a=1.0, b=1.0)

    def test_domain_requires_positive_density(self):
        with pytest.raises(ValidationError):
            DomainMeasure(a=0.0, b=1.0, rho=0.0)

    def test_target_pieces_must_be_continuous(self):
        with pytest.raises(ValidationError):
            Target(pieces=(
                TargetPiece(x_lo=0.0, x_hi=0.5, slope=1.0, intercept=0.0),
                TargetPiece(x_lo=0.5, x_hi=1.0, slope=1.0, intercept=1.0),
            ))

    def test_target_pieces_must_tile(self):
        with pytest.raises(ValidationError):
            Target(pieces=(
                TargetPiece(x_lo=0.0, x_hi=0.4, slope=0.0, intercept=0.0),
                TargetPiece(x_lo=0.5, x_hi=1.0, slope=0.0, intercept=0.0),
            ))

    def test_piecewise_target_evaluates_each_piece(self):
        # Arrange: hat function
        target = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.5, slope=2.0, intercept=0.0),
            TargetPiece(x_lo=0.5, x_hi=1.0, slope=-2.0, intercept=2.0),
        ))

        # Act / Assert
        assert target.evaluate(0.25) == pytest.approx(0.5)
        assert target.evaluate(0.5) == pytest.approx(1.0)
        assert target.evaluate(0.75) == pytest.approx(0.5)
        assert target.knots == (0.5,)
        assert target.affine_coefficients() is None


class TestRealization:
    def test_identity_ramp(self, single_neuron):
        assert realization(single_neuron(1.0, 0.0, 1.0, 0.0), 0.5) == 0.5

    def test_inactive_neuron_leaves_constant(self, single_neuron):
        assert realization(single_neuron(1.0, 0.0, 1.0, 1.0), -1.0) == 1.0

    def test_shifted_ramp(self, single_neuron):
        theta = single_neuron(2.0, -1.0, 3.0, 0.5)

        assert realization(theta, 1.0) == pytest.approx(3.5)
        assert realization(theta, 1.0) == pytest.approx(scalar_realization([2.0], [-1.0], [3.0], 0.5, 1.0))

    def test_batch_matches_scalar_evaluator(self, random_theta):
        # Arrange
        theta = random_theta(d=1, H=5)
        xs = np.linspace(-2.0, 2.0, 41)

        # Act
        values = realization(theta, xs)

        # Assert
        expected = [scalar_realization(theta.w[:, 0], theta.b, theta.v, theta.c, x) for x in xs]
        np.testing.assert_allclose(values, expected, rtol=0, atol=1e-13)

    def test_multivariate_point_gives_scalar(self, random_theta):
        theta = random_theta(d=3, H=2)

        value = realization(theta, [0.1, 0.2, 0.3])

        assert isinstance(value, float)

    def test_one_lipschitz_in_c(self, random_theta):
        theta = random_theta(d=1, H=3)
        shifted = theta.replace(c=theta.c + 0.25)

        diff = realization(shifted, np.linspace(0, 1, 11)) - realization(theta, np.linspace(0, 1, 11))

        np.testing.assert_allclose(diff, 0.25, atol=1e-14)

    def test_single_neuron_lipschitz_constant_is_wv(self, rng):
        for _ in range(50):
            w, b, v, c = rng.standard_normal(4)
            theta = ParamVector.from_parts([w], [b], [v], c)
            grid = np.linspace(-1.0, 2.0, 13)
            for x, y in itertools.product(grid, grid):
                lhs = abs(realization(theta, x) - realization(theta, y))
                assert lhs <= abs(w * v) * abs(x - y) + 1e-12


class TestBreakpoints:
    def test_single_interior_kink(self, unit_domain, single_neuron):
        bp = breakpoints(single_neuron(2.0, -1.0, 1.0, 0.0), unit_domain)

        assert bp.kinks == (0.5,)
        assert bp.patterns == (frozenset(), frozenset({1}))

    def test_boundary_kink_is_not_interior(self, unit_domain):
        theta = ParamVector.from_parts([1.0, -1.0], [0.0, 0.25], [1.0, 1.0], 0.0)

        bp = breakpoints(theta, unit_domain)

        assert bp.kinks == (0.25,)
        assert bp.kink_neurons == (frozenset({2}),)
        assert bp.patterns == (frozenset({1, 2}), frozenset({1}))

    def test_always_active_neuron_has_no_kink(self, unit_domain, single_neuron):
        bp = breakpoints(single_neuron(0.0, 1.0, 1.0, 0.0), unit_domain)

        assert bp.kinks == ()
        assert bp.patterns == (frozenset({1}),)

    def test_coincident_kinks_are_merged(self, unit_domain):
        theta = ParamVector.from_parts([1.0, 2.0], [-0.5, -1.0], [1.0, 1.0], 0.0)

        bp = breakpoints(theta, unit_domain)

        assert bp.kinks == (0.5,)
        assert bp.kink_neurons == (frozenset({1, 2}),)

    def test_requires_univariate_input(self, unit_domain, random_theta):
        with pytest.raises(DimensionError):
            breakpoints(random_theta(d=2, H=2), unit_domain)

    def test_segments_reproduce_realization(self, unit_domain, random_theta):
        for _ in range(20):
            # Arrange
            theta = random_theta(d=1, H=6)

            # Act
            bp = breakpoints(theta, unit_domain)

            # Assert
            for (lo, hi), pattern in zip(bp.segments, bp.patterns):
                slope, intercept = segment_affine(theta, pattern)
                xs = np.linspace(lo, hi, 100)
                np.testing.assert_allclose(slope * xs + intercept, realization(theta, xs), rtol=0, atol=1e-12)

    def test_structure_is_validated(self):
        with pytest.raises(ValidationError):
            Breakpoints(a=0, b=1, kinks=(0.6, 0.4), kink_neurons=(frozenset({1}), frozenset({2})),
                        patterns=(frozenset(),) * 3)


class TestActiveInterval:
    def test_increasing_neuron_opens_at_its_kink(self, unit_domain, single_neuron):
        interval = active_interval(single_neuron(1.0, 0.0, 1.0, 0.0), 1, unit_domain)

        assert interval == Interval(lo=0.0, hi=1.0, lo_closed=False, hi_closed=True)

    def test_decreasing_neuron_closes_at_its_kink(self, unit_domain, single_neuron):
        interval = active_interval(single_neuron(-1.0, 0.5, 1.0, 0.0), 1, unit_domain)

        assert interval == Interval(lo=0.0, hi=0.5, lo_closed=True, hi_closed=False)

    def test_flat_negative_neuron_is_empty(self, unit_domain, single_neuron):
        interval = active_interval(single_neuron(0.0, -1.0, 1.0, 0.0), 1, unit_domain)

        assert interval.is_empty
        assert interval.length == 0.0

    def test_flat_positive_neuron_covers_domain(self, unit_domain, single_neuron):
        interval = active_interval(single_neuron(0.0, 2.0, 1.0, 0.0), 1, unit_domain)

        assert interval == Interval(lo=0.0, hi=1.0)

    def test_kink_beyond_domain_gives_empty(self, unit_domain, single_neuron):
        assert active_interval(single_neuron(1.0, -2.0, 1.0, 0.0), 1, unit_domain).is_empty


class TestSymdiffLength:
    def test_nested_intervals(self):
        assert symdiff_length(Interval(lo=0, hi=0.5), Interval(lo=0, hi=0.75)) == pytest.approx(0.25)

    def test_touching_intervals(self):
        assert symdiff_length(Interval(lo=0, hi=0.5), Interval(lo=0.5, hi=1)) == pytest.approx(1.0)

    def test_kink_shift_by_bias_perturbation(self, unit_domain, single_neuron):
        first = active_interval(single_neuron(1.0, -0.5, 1.0, 0.0), 1, unit_domain)
        second = active_interval(single_neuron(1.0, -0.49, 1.0, 0.0), 1, unit_domain)

        assert symdiff_length(first, second) == pytest.approx(0.01, abs=1e-15)

    def test_is_a_pseudometric(self, rng):
        def random_interval():
            lo, hi = np.sort(rng.uniform(0, 1, 2))
            return Interval(lo=lo, hi=hi, lo_closed=bool(rng.integers(2)), hi_closed=bool(rng.integers(2)))

        for _ in range(200):
            i, j, k = random_interval(), random_interval(), random_interval()
            assert symdiff_length(i, i) == 0.0
            assert symdiff_length(i, j) == pytest.approx(symdiff_length(j, i), abs=1e-15)
            assert symdiff_length(i, k) <= symdiff_length(i, j) + symdiff_length(j, k) + 1e-14

    def test_active_region_is_continuous_in_parameters(self, unit_domain, rng):
        for _ in range(20):
            # Arrange
            # |w| bounded away from zero so the small perturbations never flip orientation
            w = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0)
            b = rng.uniform(-2.0, 2.0)
            theta = ParamVector.from_parts([w], [b], [1.0], 0.0)
            base = active_interval(theta, 1, unit_domain)
            direction = rng.standard_normal(2)

            # Act
            errors = []
            for n in range(1, 21):
                h = 2.0 ** -n
                moved = ParamVector.from_parts([w + h * direction[0]], [b + h * direction[1]], [1.0], 0.0)
                errors.append(symdiff_length(base, active_interval(moved, 1, unit_domain)))

            # Assert
            assert errors[-1] < 1e-3
            assert all(later <= earlier + 1e-12 for earlier, later in zip(errors[5:], errors[6:]))


class TestConservedQuantities:
    def test_pythagorean_neuron_is_balanced(self, single_neuron):
        assert balancedness(single_neuron(3.0, 4.0, 5.0, 0.0), 1) == 0.0

    def test_unit_weight_without_output(self, single_neuron):
        assert balancedness(single_neuron(1.0, 0.0, 0.0, 0.0), 1) == 1.0

    def test_two_input_neuron(self):
        theta = ParamVector.from_parts([[1.0, 2.0]], [1.0], [2.0], 0.0)

        assert balancedness(theta, 1) == pytest.approx(2.0)

    def test_balancedness_index_is_checked(self, single_neuron):
        with pytest.raises(NeuronIndexError):
            balancedness(single_neuron(1.0, 0.0, 0.0, 0.0), 0)

    def test_lyapunov_examples(self):
        zero = ParamVector.zeros(NetworkShape(d=1, H=1))

        assert lyapunov(zero, 1.0) == 4.0
        assert lyapunov(zero, 0.0) == 0.0
        assert lyapunov(ParamVector.from_parts([0.0], [1.0], [0.0], 1.0), 0.5) == pytest.approx(2.0)

    def test_lyapunov_is_non_negative(self, random_theta, rng):
        for _ in range(50):
            assert lyapunov(random_theta(d=2, H=3), rng.normal()) >= 0.0

    def test_is_degenerate(self):
        theta = ParamVector.from_parts([0.0, 1.0], [0.0, 0.0], [2.0, 1.0], 0.0)

        assert is_degenerate(theta) == frozenset({1})

    def test_parameter_norm_covers_every_coordinate(self):
        # 1 + 4 + 4 + 16 = 25
        theta = ParamVector.from_parts([1.0], [-2.0], [2.0], 4.0)

        assert parameter_norm(theta) == pytest.approx(5.0)
        assert parameter_norm(ParamVector.zeros(NetworkShape(d=2, H=3))) == 0.0


class TestExactFit:
    def test_affine_target_is_reproduced(self):
        dom = DomainMeasure(a=-1.0, b=2.0)
        theta = exact_fit(NetworkShape(d=1, H=3), alpha=-1.5, beta=0.25, dom=dom)

        xs = np.linspace(dom.a, dom.b, 31)

        np.testing.assert_allclose(realization(theta, xs), -1.5 * xs + 0.25, atol=1e-13)

    def test_linear_target_in_two_dimensions(self, unit_domain, rng):
        theta = exact_fit_linear(NetworkShape(d=2, H=3), slopes=[1.0, 1.0], intercept=0.0, dom=unit_domain)

        points = rng.uniform(0, 1, size=(50, 2))

        np.testing.assert_allclose(realization(theta, points), points.sum(axis=1), atol=1e-13)

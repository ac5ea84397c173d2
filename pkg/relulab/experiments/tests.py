import logging
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from relulab.exceptions import ConfigError, StepSizeUnderflowError
from network.models import DomainMeasure, NetworkShape, ParamVector, Target, TargetPiece
from flow.models import FlowConfig, SolverStats
from experiments.checks import CheckResult, run_checks
from experiments.commands import cmd_ladder, cmd_simulate, cmd_sweep, cmd_verify, main
from experiments.config import CheckName, ExperimentConfig, InitConfig, RandomInitConfig, load_config
from experiments.containers import experiment_container
from experiments.repositories import SUMMARY_FILE, SWEEP_FILE, TRAJECTORY_FILE, RunSummary, SweepRow
from experiments.services import ExperimentService, terminal_rung
from experiments.suites import PropertyResult, UnknownSuiteError
from theory.services import critical_ladder


def summary_with(passed: bool) -> RunSummary:
    return RunSummary(
        H=1,
        init='explicit theta',
        t_end=1.0,
        initial_risk=0.0,
        terminal_risk=0.0,
        rung='ZERO',
        checks=(CheckResult(name=CheckName.ENERGY, value=0.0, threshold=1e-6, passed=passed),),
        stats=SolverStats(),
    )


class TestExperimentConfig:
    def test_example_configs_parse(self, configs_dir):
        for path in sorted(configs_dir.glob('*.yaml')):
            cfg = load_config(path)

            assert cfg.shape.d == 1

    def test_defaults(self):
        cfg = ExperimentConfig.model_validate({'shape': {'H': 2}, 'target': {'alpha': 1.0}})

        assert cfg.domain.build() == DomainMeasure(a=0.0, b=1.0, rho=1.0)
        assert cfg.flow == FlowConfig()
        assert cfg.checks == ()

    def test_output_stride_falls_back_to_flow(self):
        base = {'shape': {'H': 1}, 'target': {'alpha': 1.0}, 'flow': {'sample_stride': 4}}

        assert ExperimentConfig.model_validate(base).stride == 4
        assert ExperimentConfig.model_validate({**base, 'output': {'stride': 2}}).stride == 2

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({'shape': {'H': 2}, 'target': {'alpha': 1.0}, 'plot': True})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({'shape': {'H': 2}, 'target': {'alpha': 1.0}, 'flow': {'rtol': 1e-6}})

    def test_zero_tolerance_names_the_field(self):
        with pytest.raises(ValidationError) as excinfo:
            ExperimentConfig.model_validate({'shape': {'H': 1}, 'target': {'alpha': 1.0}, 'flow': {'rk_tol': 0}})

        assert excinfo.value.errors()[0]['loc'] == ('flow', 'rk_tol')

    def test_target_needs_exactly_one_kind(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({'shape': {'H': 1}, 'target': {}})

    def test_piecewise_target(self):
        cfg = ExperimentConfig.model_validate({
            'shape': {'H': 2},
            'target': {'pieces': [
                {'x_lo': 0.0, 'x_hi': 0.5, 'slope': 1.0, 'intercept': 0.0},
                {'x_lo': 0.5, 'x_hi': 1.0, 'slope': -1.0, 'intercept': 1.0},
            ]},
        })

        target = cfg.target.build(cfg.domain.build())

        assert target.knots == (0.5,)
        assert target.evaluate(0.75) == pytest.approx(0.25)

    def test_target_must_cover_domain(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({
                'shape': {'H': 1},
                'domain': {'a': 0.0, 'b': 2.0},
                'target': {'pieces': [{'x_lo': 0.0, 'x_hi': 1.0, 'slope': 1.0, 'intercept': 0.0}]},
            })

    def test_explicit_theta_length(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({'shape': {'H': 2}, 'target': {'alpha': 1.0}, 'init': {'theta': [0.0] * 4}})

    def test_random_init_is_reproducible(self):
        init = InitConfig(random=RandomInitConfig(seed=5))
        shape = NetworkShape(d=1, H=4)

        assert init.build(shape) == init.build(shape)
        assert init.build(shape) != init.build(shape, seed=6)

    def test_random_init_default_scale(self):
        shape = NetworkShape(d=1, H=4)
        init = InitConfig()

        assert RandomInitConfig().resolved_scale(shape) == 0.5
        assert 'normal(0, 0.5)' in init.describe(shape, seed=3)
        assert init.describe(shape, seed=3).endswith('seed 3')

    def test_uniform_init_stays_in_range(self):
        init = InitConfig(random=RandomInitConfig(distribution='uniform', scale=0.1, seed=2))

        theta = init.build(NetworkShape(d=1, H=8))

        assert np.all(np.abs(theta.array) <= 0.1)

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / 'broken.yaml'
        path.write_text('shape: [H: 1\n')

        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / 'absent.yaml')


class TestChecks:
    def test_exact_fit_passes_everything(self, flow_service):
        # Arrange
        dom = DomainMeasure(a=0.0, b=1.0)
        target = Target.affine(1.0, 0.0, dom)
        theta = ParamVector.from_parts([1.0], [0.0], [1.0], 0.0)
        traj = flow_service.integrate(theta, target, dom, FlowConfig(t_end=10.0, dt_max=1.0))

        # Act
        results = run_checks(traj, list(CheckName))

        # Assert
        assert [r.name for r in results] == list(CheckName)
        assert all(r.passed for r in results)

    def test_uniform_fails_away_from_the_target(self, flow_service):
        dom = DomainMeasure(a=0.0, b=1.0)
        target = Target.affine(1.0, 0.0, dom)
        # Constant network at the mean; the zero gradient keeps it there
        theta = ParamVector.from_parts([0.0], [-1.0], [0.0], 0.5)
        traj = flow_service.integrate(theta, target, dom, FlowConfig(t_end=1.0, dt_max=1.0))

        (result,) = run_checks(traj, [CheckName.UNIFORM])

        assert result.value == pytest.approx(0.5)
        assert not result.passed

    @pytest.mark.parametrize('increase, passed', [(5e-11, True), (5e-10, False)])
    def test_monotone_allows_roundoff_scale_increase(self, flow_service, increase, passed):
        # Arrange: an exact fit stays at zero risk; bump the last sample
        dom = DomainMeasure(a=0.0, b=1.0)
        target = Target.affine(1.0, 0.0, dom)
        traj = flow_service.integrate(
            ParamVector.from_parts([1.0], [0.0], [1.0], 0.0), target, dom, FlowConfig(t_end=2.0, dt_max=1.0)
        )
        risk = traj.risk.copy()
        risk[-1] = risk[-2] + increase

        # Act
        (result,) = run_checks(traj.model_copy(update={'risk': risk}), [CheckName.MONOTONE])

        # Assert
        assert result.value == pytest.approx(increase)
        assert result.threshold == pytest.approx(1e-10 * (1.0 + risk[0]))
        assert result.passed is passed


class TestCsvTrajectoryRepository:
    @pytest.fixture
    def trajectory(self, flow_service):
        dom = DomainMeasure(a=0.0, b=1.0)
        target = Target.affine(1.0, 0.0, dom)
        theta = ParamVector.from_parts([0.8, -1.2], [-0.3, 0.9], [0.5, -0.4], 0.1)
        return flow_service.integrate(theta, target, dom, FlowConfig(t_end=5.0, dt_max=0.5))

    def test_header(self, csv_repository, trajectory, tmp_path):
        path = csv_repository.save_trajectory(trajectory, tmp_path)

        header = path.read_text().splitlines()[0]

        assert path.name == TRAJECTORY_FILE
        assert header == 't,theta_1,theta_2,theta_3,theta_4,theta_5,theta_6,theta_7,risk,grad_norm,W_1,W_2,V'

    def test_round_trip_is_bit_exact(self, csv_repository, trajectory, tmp_path):
        # Act
        table = csv_repository.load_trajectory(csv_repository.save_trajectory(trajectory, tmp_path))

        # Assert
        assert np.array_equal(table.column('t'), trajectory.times)
        assert np.array_equal(table.block('theta'), trajectory.params)
        assert np.array_equal(table.column('risk'), trajectory.risk)
        assert np.array_equal(table.column('grad_norm'), trajectory.grad_norm)
        assert np.array_equal(table.block('W'), trajectory.W)
        assert np.array_equal(table.column('V'), trajectory.V)

    def test_same_trajectory_same_bytes(self, csv_repository, trajectory, tmp_path):
        first = csv_repository.save_trajectory(trajectory, tmp_path / 'first').read_bytes()
        second = csv_repository.save_trajectory(trajectory, tmp_path / 'second').read_bytes()

        assert first == second

    def test_stride_keeps_the_ends(self, csv_repository, trajectory, tmp_path):
        table = csv_repository.load_trajectory(csv_repository.save_trajectory(trajectory, tmp_path, stride=3))

        assert table.column('t')[0] == 0.0
        assert table.column('t')[-1] == trajectory.times[-1]
        assert len(table.data) == len(trajectory.sample_indices(3))

    def test_summary(self, csv_repository, tmp_path):
        path = csv_repository.save_summary(summary_with(passed=False), tmp_path)

        text = path.read_text()

        assert path.name == SUMMARY_FILE
        assert 'rung: ZERO' in text
        assert 'check energy: FAIL' in text
        assert text.endswith('verdict: FAIL\n')

    def test_summary_with_a_none_rung(self, csv_repository, tmp_path):
        summary = summary_with(passed=True).model_copy(
            update={'rung': 'NONE', 'bounded': True, 'terminal_grad_norm': 0.5}
        )

        text = csv_repository.save_summary(summary, tmp_path).read_text()

        assert 'terminal_grad_norm: 5.000000e-01' in text
        assert 'ladder: not converged at horizon' in text
        assert text.endswith('verdict: PASS\n')

    def test_sweep_table(self, csv_repository, tmp_path):
        rows = [
            SweepRow(seed=1, terminal_risk=0.0, rung='ZERO', passed=True),
            SweepRow(seed=2, terminal_risk=1.0 / 12.0, rung='0', passed=False, note='conditional'),
        ]

        lines = csv_repository.save_sweep(rows, tmp_path).read_text().splitlines()

        assert lines[0] == 'seed\tterminal_risk\trung\tverdict\tnote'
        assert lines[1] == '1\t0\tZERO\tPASS\t'
        assert lines[2].split('\t')[2:] == ['0', 'FAIL', 'conditional']
        assert (tmp_path / SWEEP_FILE).exists()


class TestRunSummary:
    @pytest.mark.parametrize('bounded, grad_norm, passed', [
        (True, 1e-9, False),
        (True, 1e-3, True),
        (False, 1e-9, True),
        (None, None, True),
    ])
    def test_none_rung_fails_only_when_settled(self, bounded, grad_norm, passed):
        summary = summary_with(passed=True).model_copy(
            update={'rung': 'NONE', 'bounded': bounded, 'terminal_grad_norm': grad_norm}
        )

        assert summary.passed is passed
        assert ('ladder: FAIL settled between rungs' in summary.render()) is not passed

    def test_settled_on_a_rung_passes(self):
        summary = summary_with(passed=True).model_copy(
            update={'rung': '2', 'bounded': True, 'terminal_grad_norm': 0.0}
        )

        assert summary.settled
        assert summary.passed
        assert 'ladder:' not in summary.render()

    def test_failed_check_still_fails(self):
        summary = summary_with(passed=False).model_copy(update={'bounded': True, 'terminal_grad_norm': 0.0})

        assert not summary.passed


class TestExperimentService:
    def test_exact_fit_run(self, experiment_service, trajectory_repository, exact_fit_config):
        # Arrange
        cfg = ExperimentConfig.model_validate(exact_fit_config)
        directory = Path(exact_fit_config['output']['directory'])

        # Act
        summary = experiment_service.simulate(cfg)

        # Assert
        assert summary.passed
        assert summary.terminal_risk == 0.0
        assert summary.rung == 'ZERO'
        table = trajectory_repository.load_trajectory(directory / TRAJECTORY_FILE)
        assert np.all(table.column('risk') == 0.0)
        assert trajectory_repository.summaries[directory] == summary

    def test_seed_override_changes_the_start(self, experiment_service, trajectory_repository, tmp_path):
        cfg = ExperimentConfig.model_validate({
            'shape': {'H': 2},
            'target': {'alpha': 1.0},
            'flow': {'t_end': 0.5},
        })

        first = experiment_service.simulate(cfg, seed=1, directory=tmp_path / 'one')
        second = experiment_service.simulate(cfg, seed=2, directory=tmp_path / 'two')

        assert first.seed == 1 and second.seed == 2
        assert first.initial_risk != second.initial_risk

    def test_non_affine_target_has_no_rung(self, flow_service):
        dom = DomainMeasure(a=0.0, b=1.0)
        target = Target(pieces=(
            TargetPiece(x_lo=0.0, x_hi=0.5, slope=1.0, intercept=0.0),
            TargetPiece(x_lo=0.5, x_hi=1.0, slope=-1.0, intercept=1.0),
        ))
        theta = ParamVector.from_parts([1.0], [-0.2], [0.3], 0.0)
        traj = flow_service.integrate(theta, target, dom, FlowConfig(t_end=0.5))

        assert terminal_rung(traj) == 'n/a'

    def test_sweep_writes_one_directory_per_seed(self, experiment_service, trajectory_repository, tmp_path):
        cfg = ExperimentConfig.model_validate({
            'shape': {'H': 1},
            'target': {'alpha': 1.0},
            'flow': {'t_end': 0.5, 'dt_min': 1e-14, 'rk_tol': 1e-12},
            'checks': ['energy', 'conservation'],
            'output': {'directory': str(tmp_path)},
        })

        rows = experiment_service.sweep(cfg, [3, 4])

        assert [row.seed for row in rows] == [3, 4]
        assert all(row.passed for row in rows)
        assert set(trajectory_repository.summaries) == {tmp_path / 'seed_3', tmp_path / 'seed_4'}
        assert trajectory_repository.sweeps[tmp_path] == rows

    def test_sweep_records_solver_failures(self, flow_service, trajectory_repository, tmp_path):
        cfg = ExperimentConfig.model_validate({'shape': {'H': 1}, 'target': {'alpha': 1.0}})

        class FailingFlow:
            def integrate(self, *args, **kwargs):
                raise StepSizeUnderflowError(t=1.0, dt=1e-15, dt_min=1e-12, state=np.zeros(4))

        service = ExperimentService(gradient_flow=FailingFlow(), repository=trajectory_repository)

        (row,) = service.sweep(cfg, [1], directory=tmp_path)

        assert not row.passed
        assert row.note.startswith('solver:')

    def test_sweep_fails_only_runs_settled_between_rungs(self, experiment_service, tmp_path, monkeypatch):
        # Arrange
        cfg = ExperimentConfig.model_validate({'shape': {'H': 2}, 'target': {'alpha': 1.0}})
        outcomes = {
            1: {'rung': 'NONE', 'bounded': True, 'terminal_grad_norm': 1e-9},
            2: {'rung': 'NONE', 'bounded': True, 'terminal_grad_norm': 1e-2},
            3: {'rung': '2', 'bounded': True, 'terminal_grad_norm': 1e-9},
        }

        def simulate(cfg, seed, directory):
            return summary_with(passed=True).model_copy(update={'seed': seed, **outcomes[seed]})

        monkeypatch.setattr(experiment_service, 'simulate', simulate)

        # Act
        rows = experiment_service.sweep(cfg, [1, 2, 3], directory=tmp_path)

        # Assert
        assert [row.passed for row in rows] == [False, True, True]
        assert [row.note for row in rows] == ['settled between rungs', 'not converged at horizon', '']

    @pytest.mark.slow
    @pytest.mark.parametrize('H', [2, 4])
    def test_sweep_reports_the_rung_histogram(self, experiment_service, tmp_path, caplog, H):
        # Arrange
        cfg = ExperimentConfig.model_validate({
            'shape': {'H': H},
            'target': {'alpha': 1.0},
            'flow': {'t_end': 100.0, 'dt_min': 1e-14, 'dt_max': 1.0, 'rk_tol': 1e-12},
            'checks': ['boundedness'],
        })
        labels = {rung.label for rung in critical_ladder(H, 1.0, 0.0, 1.0, 1.0).rungs} | {'NONE'}

        # Act
        with caplog.at_level(logging.INFO, logger='experiments.services'):
            rows = experiment_service.sweep(cfg, [1, 2, 3], directory=tmp_path)

        # Assert
        assert {row.rung for row in rows} <= labels
        assert all(row.passed for row in rows)
        assert any('rung histogram' in message for message in caplog.messages)


class TestCommands:
    def test_ladder_width_two(self, capsys):
        status = cmd_ladder(2, 1.0, 0.0, 1.0, 1.0)

        lines = capsys.readouterr().out.splitlines()
        assert status == 0
        assert lines[0] == 'n\tvalue'
        assert lines[1].split('\t')[0] == '0'
        assert float(lines[1].split('\t')[1]) == pytest.approx(1.0 / 12.0)
        assert float(lines[2].split('\t')[1]) == pytest.approx(1.0 / (12.0 * 81.0))
        assert lines[3] == 'ZERO\t0'
        assert float(lines[4].split('\t')[1]) == pytest.approx(0.00102880658)

    def test_ladder_width_one(self, capsys):
        cmd_ladder(1, 1.0, 0.0, 1.0)

        rows = [line.split('\t')[0] for line in capsys.readouterr().out.splitlines()[1:]]
        assert rows == ['0', 'ZERO', 'threshold']

    def test_ladder_flat_target(self, capsys):
        cmd_ladder(3, 0.0, 0.0, 1.0)

        assert capsys.readouterr().out.splitlines()[1:] == ['ZERO\t0']

    def test_ladder_rejects_empty_interval(self):
        assert cmd_ladder(1, 1.0, 1.0, 0.0) == 2

    def test_simulate_exact_fit_passes(self, exact_fit_config, write_config, experiment_service, trajectory_repository):
        with experiment_container.experiment_service.override(experiment_service):
            status = cmd_simulate(write_config(exact_fit_config))

        assert status == 0
        assert len(trajectory_repository.summaries) == 1

    def test_simulate_invalid_config(self, exact_fit_config, write_config, caplog, mock_experiment_service):
        exact_fit_config['flow']['rk_tol'] = 0

        with experiment_container.experiment_service.override(mock_experiment_service), caplog.at_level(logging.ERROR):
            status = cmd_simulate(write_config(exact_fit_config))

        assert status == 2
        assert 'flow.rk_tol' in caplog.text
        mock_experiment_service.simulate.assert_not_called()

    def test_simulate_solver_failure(self, exact_fit_config, write_config, mock_experiment_service):
        mock_experiment_service.simulate.side_effect = StepSizeUnderflowError(
            t=2.0, dt=1e-15, dt_min=1e-12, state=np.zeros(4)
        )

        with experiment_container.experiment_service.override(mock_experiment_service):
            status = cmd_simulate(write_config(exact_fit_config))

        assert status == 3

    def test_simulate_check_failure(self, exact_fit_config, write_config, mock_experiment_service):
        mock_experiment_service.simulate.return_value = summary_with(passed=False)

        with experiment_container.experiment_service.override(mock_experiment_service):
            status = cmd_simulate(write_config(exact_fit_config), seed=7)

        assert status == 1
        assert mock_experiment_service.simulate.call_args.args[1] == 7

    def test_simulate_rejects_planar_input(self, exact_fit_config, write_config, experiment_service):
        exact_fit_config['shape']['d'] = 2
        exact_fit_config['init'] = {}

        with experiment_container.experiment_service.override(experiment_service):
            status = cmd_simulate(write_config(exact_fit_config))

        assert status == 2

    def test_verify_reports_tsv(self, capsys, mock_verification_service, tmp_path):
        # Arrange
        mock_verification_service.run.return_value = [
            PropertyResult(name='gradient_vs_quadrature', cases=4, max_deviation=0.25, passed=True),
            PropertyResult(name='gradient_norm_bound', cases=4, max_deviation=0.5, passed=True),
        ]
        report = tmp_path / 'report.tsv'

        # Act
        with experiment_container.verification_service.override(mock_verification_service):
            status = cmd_verify('gradient', seed=1, n_cases=4, report_path=report)

        # Assert
        assert status == 0
        mock_verification_service.run.assert_called_once_with('gradient', 1, 4)
        lines = capsys.readouterr().out.splitlines()
        assert lines[1] == 'gradient_vs_quadrature\t4\t2.500000e-01\tPASS'
        assert report.read_text().splitlines() == lines

    def test_verify_failure(self, mock_verification_service):
        mock_verification_service.run.return_value = [
            PropertyResult(name='flow_conservation', cases=2, max_deviation=1e-3, passed=False),
        ]

        with experiment_container.verification_service.override(mock_verification_service):
            assert cmd_verify('flow', n_cases=2) == 1

    def test_verify_unknown_suite(self):
        assert cmd_verify('nonsense') == 2

    def test_sweep_check_failure(self, exact_fit_config, write_config, mock_experiment_service):
        mock_experiment_service.sweep.return_value = [
            SweepRow(seed=1, terminal_risk=0.0, rung='ZERO', passed=True),
            SweepRow(seed=2, terminal_risk=0.1, rung='NONE', passed=False, note='limsup'),
        ]

        with experiment_container.experiment_service.override(mock_experiment_service):
            assert cmd_sweep(write_config(exact_fit_config), [1, 2]) == 1

    def test_main_usage_error(self):
        assert main(['frobnicate']) == 2

    def test_main_ladder(self, capsys):
        assert main(['ladder', '--H', '1']) == 0
        assert capsys.readouterr().out.startswith('n\tvalue\n0\t')

    def test_main_rejects_non_positive_cases(self):
        assert main(['verify', 'gradient', '--cases', '0']) == 2


class TestSuites:
    @pytest.fixture
    def verification_service(self):
        return experiment_container.verification_service()

    def test_unknown_suite(self, verification_service):
        with pytest.raises(UnknownSuiteError):
            verification_service.run('nonsense', 1, 1)

    def test_gradient_suite(self, verification_service):
        results = verification_service.run('gradient', seed=1, n_cases=8)

        assert [r.name for r in results] == [
            'risk_vs_quadrature',
            'gradient_vs_quadrature',
            'gradient_vs_finite_difference',
            'gradient_norm_bound',
            'rho_scaling',
        ]
        assert all(r.passed for r in results)
        assert results[0].cases == 8

    def test_smoothing_suite_sweeps_unrestricted_parameters(self, verification_service):
        results = verification_service.run('smoothing', seed=3, n_cases=3)

        assert [r.name for r in results] == [
            'smoothing_family',
            'smoothing_errors_nonincreasing',
            'smoothing_gradient_limit',
        ]
        assert all(r.passed for r in results)
        assert results[0].max_deviation == 0.0

    def test_theory_suite(self, verification_service):
        results = verification_service.run('theory', seed=2, n_cases=300)

        assert [r.name for r in results] == [
            'small_risk_structure',
            'ladder_attained_rungs',
            'ladder_ordering',
            'best_constant_risk',
            'affine_moment_solve',
        ]
        assert all(r.passed for r in results)

    def test_highdim_suite(self, verification_service):
        results = verification_service.run('highdim', seed=1, n_cases=3)

        assert {r.name for r in results} == {'mc_cross_validation', 'mc_deterministic'}
        assert results[1].passed

    @pytest.mark.slow
    def test_flow_suite(self, verification_service):
        results = verification_service.run('flow', seed=1, n_cases=4)

        by_name = {r.name: r for r in results}
        assert by_name['flow_runs_completed'].passed
        assert by_name['flow_conservation'].passed
        assert by_name['flow_monotone'].passed
        assert by_name['flow_lyapunov'].passed
        assert by_name['flow_limsup'].passed

    def test_report_line(self):
        line = PropertyResult(name='mc_deterministic', cases=1, max_deviation=0.0, passed=False).line()

        assert line == 'mc_deterministic\t1\t0.000000e+00\tFAIL'

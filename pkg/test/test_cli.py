"""Tests of the dbalign command line."""
import csv
import io
import json

import numpy as np
import pytest

from dbalign import cli
from dbalign.model import ModelParams, sample_h0, sample_h1, score_table
from dbalign.recovery import Algorithm, recover
from dbalign.storage import read_database, read_truth
from dbalign.errors import NumericalError
from dbalign.theory.bounds import BOUND_COLUMNS
from dbalign.montecarlo.engine import SPEC_COLUMNS, RESULT_COLUMNS


def _read(path):
    with open(path, 'rb') as handle:
        return handle.read()


@pytest.fixture
def strong_pair(tmp_path):
    paths = {name: str(tmp_path / f'{name}.csv') for name in ('x', 'y', 'truth')}
    code = cli.run(['generate', '--n', '10', '--d', '200', '--rho', '0.99', '--permutation', 'random', '--seed', '5',
                    '--x-out', paths['x'], '--y-out', paths['y'], '--truth-out', paths['truth']])
    assert code == cli.EXIT_OK
    return paths


class TestGenerate:

    def test_same_seed_gives_identical_files(self, tmp_path):
        outputs = []
        for attempt in range(2):
            x_out, y_out, truth_out = (str(tmp_path / f'{name}{attempt}.csv') for name in ('x', 'y', 'truth'))
            assert cli.run(['generate', '--n', '6', '--d', '4', '--rho', '0.5', '--permutation', 'random', '--seed', '9',
                            '--x-out', x_out, '--y-out', y_out, '--truth-out', truth_out]) == 0
            outputs.append((_read(x_out), _read(y_out), _read(truth_out)))
        assert outputs[0] == outputs[1]

    def test_files_match_in_process_sampling(self, tmp_path, capsys):
        x_out, y_out, truth_out = (str(tmp_path / f'{name}.csv') for name in ('x', 'y', 'truth'))
        assert cli.run(['generate', '--n', '12', '--d', '40', '--rho', '0.9', '--permutation', 'random', '--seed', '1',
                        '--x-out', x_out, '--y-out', y_out, '--truth-out', truth_out]) == 0
        sigma = read_truth(truth_out, 12)
        db = sample_h1(ModelParams(n=12, d=40, rho=0.9, sigma=tuple(sigma)), seed=1)
        np.testing.assert_array_equal(read_database(x_out), db.x)
        np.testing.assert_array_equal(read_database(y_out), db.y)

        assert cli.run(['recover', '--x', x_out, '--y', y_out, '--algo', 'tc', '--theta', '0.6']) == 0
        in_process = recover(score_table(db), Algorithm.TC, theta=0.6).alignment
        expected = ''.join(f'{row + 1},{column + 1}\n' for row, column in in_process.pairs)
        assert capsys.readouterr().out == expected

    def test_h0_files_match_in_process_sampling(self, tmp_path):
        x_out, y_out = str(tmp_path / 'x.csv'), str(tmp_path / 'y.csv')
        assert cli.run(['generate', '--n', '3', '--d', '2', '--hypothesis', 'H0', '--seed', '1', '--x-out', x_out, '--y-out', y_out]) == 0
        db = sample_h0(ModelParams(n=3, d=2), seed=1)
        np.testing.assert_array_equal(read_database(x_out), db.x)
        np.testing.assert_array_equal(read_database(y_out), db.y)

    def test_h0_has_no_truth(self, tmp_path, capsys):
        code = cli.run(['generate', '--n', '3', '--d', '2', '--hypothesis', 'H0', '--x-out', str(tmp_path / 'x.csv'),
                        '--y-out', str(tmp_path / 'y.csv'), '--truth-out', str(tmp_path / 'truth.csv')])
        assert code == cli.EXIT_USAGE
        assert 'truth' in capsys.readouterr().err

    def test_h1_needs_rho(self, tmp_path):
        code = cli.run(['generate', '--n', '3', '--d', '2', '--x-out', str(tmp_path / 'x.csv'), '--y-out', str(tmp_path / 'y.csv')])
        assert code == cli.EXIT_USAGE


class TestDetect:

    def test_correlated_pair_is_h1(self, strong_pair, capsys):
        code = cli.run(['detect', '--x', strong_pair['x'], '--y', strong_pair['y'], '--theta', '0.5', '--beta', '0.5', '--rho', '0.99'])
        assert code == 1
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert rows[0]['N'] == '10'
        assert rows[0]['decision'] == 'H1'

    def test_extreme_threshold_is_h0(self, strong_pair, capsys):
        code = cli.run(['detect', '--x', strong_pair['x'], '--y', strong_pair['y'], '--theta', '0.9999', '--beta', '0.5',
                        '--p-ref', '0.5', '--format', 'json'])
        assert code == 0
        record = json.loads(capsys.readouterr().out)
        assert record == {'detector': 'count', 'N': 0, 'threshold': 2.5, 'decision': 'H0'}

    def test_sum_of_inner_products(self, strong_pair, capsys):
        code = cli.run(['detect', '--x', strong_pair['x'], '--y', strong_pair['y'], '--detector', 'sop', '--gamma', '0.5', '--rho', '0.9',
                        '--format', 'json'])
        record = json.loads(capsys.readouterr().out)
        assert 'T' in record
        assert code == (1 if record['decision'] == 'H1' else 0)

    def test_directory_input_is_a_usage_error(self, strong_pair, tmp_path, capsys):
        code = cli.run(['detect', '--x', str(tmp_path), '--y', strong_pair['y'], '--theta', '0.5', '--beta', '0.5', '--p-ref', '0.5'])
        assert code == cli.EXIT_USAGE
        assert capsys.readouterr().err.startswith('dbalign: ')

    def test_count_needs_theta(self, strong_pair):
        assert cli.run(['detect', '--x', strong_pair['x'], '--y', strong_pair['y'], '--rho', '0.9']) == cli.EXIT_USAGE


class TestRecover:

    def test_alignment_and_summary(self, strong_pair, capsys):
        code = cli.run(['recover', '--x', strong_pair['x'], '--y', strong_pair['y'], '--algo', 'ml', '--truth', strong_pair['truth']])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        with open(strong_pair['truth'], encoding='utf-8') as handle:
            assert lines[:-1] == handle.read().splitlines()
        assert json.loads(lines[-1]) == {'size': 10, 'err1': False, 'err2': False}

    def test_threshold_above_every_score_gives_empty_alignment(self, strong_pair, capsys):
        code = cli.run(['recover', '--x', strong_pair['x'], '--y', strong_pair['y'], '--algo', 'tc', '--theta', '1.5'])
        assert code == 0
        assert capsys.readouterr().out == ''

    def test_alignment_file(self, strong_pair, tmp_path):
        out = str(tmp_path / 'alignment.csv')
        assert cli.run(['recover', '--x', strong_pair['x'], '--y', strong_pair['y'], '--algo', 'mp', '--r', '0.3', '--output', out]) == 0
        with open(out, encoding='utf-8') as handle:
            assert len(handle.read().splitlines()) == 3

    def test_json_lines(self, strong_pair, capsys):
        assert cli.run(['recover', '--x', strong_pair['x'], '--y', strong_pair['y'], '--algo', 'ml', '--format', 'json']) == 0
        records = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        with open(strong_pair['truth'], encoding='utf-8') as handle:
            expected = [dict(zip(('i', 'j'), map(int, line.split(',')))) for line in handle.read().splitlines()]
        assert records == expected

    def test_unwritable_output(self, strong_pair, tmp_path):
        out = str(tmp_path / 'absent' / 'alignment.csv')
        assert cli.run(['recover', '--x', strong_pair['x'], '--y', strong_pair['y'], '--algo', 'ml', '--output', out]) == cli.EXIT_USAGE

    def test_malformed_database(self, strong_pair, tmp_path, capsys):
        broken = tmp_path / 'broken.csv'
        broken.write_text('1,2\n3\n', encoding='utf-8')
        code = cli.run(['recover', '--x', str(broken), '--y', strong_pair['y'], '--algo', 'ml'])
        assert code == cli.EXIT_USAGE
        assert f'{broken}:2' in capsys.readouterr().err

    def test_missing_database(self, strong_pair, tmp_path):
        assert cli.run(['recover', '--x', str(tmp_path / 'absent.csv'), '--y', strong_pair['y'], '--algo', 'ml']) == cli.EXIT_USAGE


class TestBounds:

    def test_default_beta_sweep(self, capsys):
        assert cli.run(['bounds', '--n', '200', '--d', '50', '--rho', '0.7', '--theta', '0.55', '--sweep', 'beta']) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ','.join(BOUND_COLUMNS)
        assert len(lines) == 101

    def test_single_point_as_json(self, capsys):
        assert cli.run(['bounds', '--n', '200', '--d', '50', '--rho', '0.7', '--theta', '0.55', '--beta', '0.5', '--format', 'json']) == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report) == set(BOUND_COLUMNS)
        assert 0.0 <= report['pe1_lo'] <= report['pe1_up'] <= 1.0

    def test_gamma_trade_off(self, tmp_path):
        out = str(tmp_path / 'sop.csv')
        assert cli.run(['bounds', '--n', '200', '--d', '50', '--rho', '0.7', '--detector', 'sop', '--grid', '0.1,0.5,1.0',
                        '--output', out]) == 0
        with open(out, encoding='utf-8') as handle:
            rows = list(csv.DictReader(handle))
        assert [row['gamma'] for row in rows] == ['0.1', '0.5', '1']

    def test_theta_is_required(self):
        assert cli.run(['bounds', '--n', '200', '--d', '50', '--rho', '0.7']) == cli.EXIT_USAGE

    def test_numerical_failure(self, monkeypatch, capsys):
        def failing_report(*args, **kwargs):
            raise NumericalError('quadrature did not converge', achieved=1e-3)

        monkeypatch.setattr(cli, 'bound_report', failing_report)
        assert cli.run(['bounds', '--n', '200', '--d', '50', '--rho', '0.7', '--theta', '0.55']) == cli.EXIT_NUMERIC
        assert 'numerical failure' in capsys.readouterr().err


class TestExperiment:

    def test_empty_grid_writes_header_only(self, capsys):
        assert cli.run(['experiment', '--n', '10', '--d', '10', '--rho', '0.5', '--theta', '0.5', '--sweep', 'rho', '--grid', '']) == 0
        assert capsys.readouterr().out == ','.join(SPEC_COLUMNS + RESULT_COLUMNS) + '\n'

    def test_single_run_as_json(self, capsys):
        assert cli.run(['experiment', '--n', '20', '--d', '30', '--rho', '0.8', '--algo', 'ml', '--trials', '5', '--format', 'json']) == 0
        row = json.loads(capsys.readouterr().out)
        assert row['algorithm'] == 'ml'
        assert row['trials'] == 5
        assert row['p_fa_hat'] is None

    def test_theta_sweep_file(self, tmp_path, sample_config):
        out = str(tmp_path / 'sweep.csv')
        assert cli.run(['experiment', '--config', sample_config, '--n', '20', '--d', '30', '--rho', '0.8', '--trials', '4',
                        '--sweep', 'theta', '--range', '0.4', '0.6', '3', '--output', out]) == 0
        with open(out, encoding='utf-8') as handle:
            rows = list(csv.DictReader(handle))
        assert [row['theta'] for row in rows] == ['0.4', '0.5', '0.6']

    def test_thread_flag(self, capsys):
        assert cli.run(['experiment', '--n', '10', '--d', '10', '--rho', '0.8', '--algo', 'ml', '--trials', '4', '--threads', '2']) == 0
        assert capsys.readouterr().out.count('\n') == 2


class TestUsage:

    def test_unknown_command(self):
        assert cli.run(['align']) == cli.EXIT_USAGE

    def test_version(self, capsys):
        assert cli.run(['--version']) == 0
        assert capsys.readouterr().out.startswith('dbalign ')

    def test_invalid_probability(self):
        assert cli.run(['bounds', '--n', '200', '--d', '50', '--rho', '0.7', '--theta', '1.5']) == cli.EXIT_USAGE

import csv
import os

import pytest
from click.testing import CliRunner

from singular_pde.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def read_rows(path):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


def read_summary(path):
    with open(path) as handle:
        return dict(line.rstrip('\n').split(' = ', 1) for line in handle)


def test_solve_headline(runner, config_dir, tmp_path):
    out = tmp_path / 'headline'
    result = runner.invoke(cli, ['solve', '--config', os.path.join(config_dir, 'headline.ini'),
                                 '--out', str(out)])
    assert result.exit_code == 0, result.output
    trace = read_rows(out / 'trace.csv')
    assert len(trace) >= 2
    assert float(trace[-1]['c1_distance']) <= 1e-8
    certificates = {row['certificate']: row for row in read_rows(out / 'certificates.csv')}
    assert certificates['fixed_point']['ok'] == 'true'
    assert certificates['comparison']['ok'] == 'true'
    assert {'gradient_bound', 'minimal_selection'} <= set(certificates)
    assert read_summary(out / 'summary.txt')['passed'] == 'true'
    assert len(read_rows(out / 'u.csv')) == 65
    assert (out / 'runs.db').exists()


def test_solve_is_deterministic(runner, config_dir, tmp_path):
    config = os.path.join(config_dir, 'headline.ini')
    for name in ('first', 'second'):
        result = runner.invoke(cli, ['solve', '--config', config, '--out', str(tmp_path / name)])
        assert result.exit_code == 0, result.output
    for name in ('trace.csv', 'solve.csv', 'u.csv', 'summary.txt'):
        first = (tmp_path / 'first' / name).read_bytes()
        assert first == (tmp_path / 'second' / name).read_bytes()


def test_solve_system(runner, config_dir, tmp_path):
    out = tmp_path / 'system'
    result = runner.invoke(cli, ['solve', '--config', os.path.join(config_dir, 'system.ini'),
                                 '--out', str(out)])
    assert result.exit_code == 0, result.output
    certificates = {row['certificate']: row for row in read_rows(out / 'certificates.csv')}
    assert certificates['trapping']['ok'] == 'true'
    assert (out / 'v.csv').exists()
    assert len(read_rows(out / 'solve.csv')) == 2


def test_audit_warns_without_failing(runner, config_dir, tmp_path):
    out = tmp_path / 'audit'
    config = os.path.join(config_dir, 'system_chain_violation.ini')
    result = runner.invoke(cli, ['audit', '--config', config, '--out', str(out)])
    assert result.exit_code == 0, result.output
    rows = read_rows(out / 'certificates.csv')
    assert any(r['certificate'] == 'parameter_chain' and r['status'] == 'warning' for r in rows)
    assert (out / 'hypothesis_audit.csv').exists()


def test_multi(runner, config_dir, tmp_path):
    out = tmp_path / 'multi'
    result = runner.invoke(cli, ['multi', '--config', os.path.join(config_dir, 'multiplicity.ini'),
                                 '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert len(read_rows(out / 'multiplicity.csv')) == 3
    assert [r['certificate'] for r in read_rows(out / 'certificates.csv')] == ['ordering']
    assert (out / 'u_rung_3.csv').exists()


def test_converge(runner, config_dir, tmp_path):
    out = tmp_path / 'converge'
    config = os.path.join(config_dir, 'manufactured_robin.ini')
    result = runner.invoke(cli, ['converge', '--config', config, '--out', str(out)])
    assert result.exit_code == 0, result.output
    rows = read_rows(out / 'convergence.csv')
    assert rows[0]['observed_order'] == ''
    assert float(rows[-1]['observed_order']) >= 1.9


def test_converge_below_the_required_order_fails(runner, config_dir, write_config, tmp_path):
    with open(os.path.join(config_dir, 'manufactured_robin.ini')) as handle:
        text = handle.read()
    text = text.replace('levels = 16 32 64', 'levels = 16 32').replace('min_order = 1.9',
                                                                       'min_order = 10')
    out = tmp_path / 'strict'
    result = runner.invoke(cli, ['converge', '--config', write_config(text), '--out', str(out)])
    assert result.exit_code == 3
    assert 'asserted checks failed' in result.output
    assert read_summary(out / 'summary.txt')['passed'] == 'false'


def test_missing_config_exits_with_validation_code(runner, tmp_path):
    result = runner.invoke(cli, ['solve', '--config', str(tmp_path / 'absent.ini'),
                                 '--out', str(tmp_path / 'out')])
    assert result.exit_code == 2
    assert 'config file not found' in result.output


def test_missing_config_without_out_leaves_no_ledger(runner, tmp_path):
    with runner.isolated_filesystem(temp_dir=tmp_path):
        result = runner.invoke(cli, ['solve', '--config', 'absent.ini'])
        assert result.exit_code == 2
        assert not os.path.exists('out')


def test_invalid_config_exits_with_validation_code(runner, write_config, tmp_path):
    path = write_config('[operator]\np = 0.5\nlambda = 1\nbc = neumann\n[solver]\ntol = 0\n')
    result = runner.invoke(cli, ['solve', '--config', path, '--out', str(tmp_path / 'out')])
    assert result.exit_code == 2
    assert 'p must exceed 1' in result.output
    assert 'tol must be positive' in result.output


def test_bracket_failure_exits_with_bracket_code(runner, write_config, tmp_path):
    path = write_config(
        '[problem]\nn_cells = 16\nbracket = constant\nbracket_level = 2\n'
        '[operator]\np = 2\nlambda = 1\nbc = neumann\n'
        '[term:source]\nkind = source\n')
    result = runner.invoke(cli, ['solve', '--config', path, '--out', str(tmp_path / 'out')])
    assert result.exit_code == 5
    assert 'fails the residual check' in result.output


def test_seed_must_be_nonnegative(runner, config_dir, tmp_path):
    result = runner.invoke(cli, ['solve', '--config', os.path.join(config_dir, 'headline.ini'),
                                 '--seed=-1', '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_history_lists_recorded_runs(runner, config_dir, tmp_path, write_config):
    out = str(tmp_path / 'ledger')
    runner.invoke(cli, ['solve', '--config', os.path.join(config_dir, 'headline.ini'),
                        '--out', out])
    runner.invoke(cli, ['solve', '--config', str(tmp_path / 'absent.ini'), '--out', out])
    result = runner.invoke(cli, ['history', '--out', out])
    assert result.exit_code == 0
    lines = result.output.strip().splitlines()
    assert len(lines) == 2
    assert 'error' in lines[0] and 'exit=2' in lines[0]
    assert 'passed' in lines[1] and 'exit=0' in lines[1]


def test_history_on_an_empty_ledger(runner, tmp_path):
    result = runner.invoke(cli, ['history', '--out', str(tmp_path)])
    assert result.exit_code == 0
    assert 'no runs recorded' in result.output

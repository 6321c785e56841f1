"""
Batch commands. Each one reads a run config, runs its pipeline inside the
ledger's app context and writes CSV reports to the output directory.
"""
import logging
import os
import time
from dataclasses import replace

import click
import numpy as np

from .. import create_app
from ..config.settings import SOLVE_COLUMNS, SUMMARY_FILENAME, TRACE_COLUMNS
from ..errors import ConfigValidationError, InvariantFailed, SolverError
from ..experiments import ExperimentSpec, run_experiment
from ..fixed_point import (
    calibrate_gradient_constant, gradient_bound_check, iterate_scalar, iterate_system,
    minimal_selection_probe,
)
from ..frozen_solver import FrozenRHS, solve_frozen_scalar, solve_frozen_system
from ..utils.database import recent_runs, record_run
from ..utils.formatting import format_summary, write_csv, write_field_csv, write_summary
from .config_parser import parse_config, with_overrides

logger = logging.getLogger(__name__)

CERTIFICATE_COLUMNS = ['certificate', 'ok', 'status', 'detail']

# Successive sup-distance ratio expected near a contracting fixed point
CONTRACTION_LIMIT = 0.9


def run_options(command):
    """--config / --out / --seed, shared by every run command."""
    command = click.option('--seed', type=click.IntRange(min=0), default=None,
                           help='Override [solver] seed.')(command)
    command = click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                           help='Output directory (default: [output] directory).')(command)
    command = click.option('--config', 'config_path', required=True,
                           type=click.Path(dir_okay=False), help='Run config (INI).')(command)
    return command


def _certificate(name, ok, detail):
    return {'certificate': name, 'ok': bool(ok), 'status': 'ok' if ok else 'warning',
            'detail': detail}


# =============================================================================
# PIPELINES
# =============================================================================

def _final_reports(problem, bracket, solution, options):
    """One more frozen solve at the fixed point, for the per-component report rows."""
    if problem.arity == 'system':
        clamped = tuple(s.with_values(b.clamp(s.values)) for s, b in zip(solution, bracket))
        rhs = (FrozenRHS.system(problem, 'f', clamped, solution),
               FrozenRHS.system(problem, 'g', clamped, solution))
        return solve_frozen_system(problem.operators, rhs, bracket, inits=solution,
                                   tol=options.tol, max_iters=options.max_newton)
    (u,) = solution
    rhs = FrozenRHS.scalar(problem, u, bracket)
    report = solve_frozen_scalar(problem.operator, rhs, bracket, u, options.tol,
                                 options.max_newton)
    return (report,)


def _calibration(problem, options):
    try:
        return calibrate_gradient_constant(problem, options.tol)
    except ValueError as exc:
        logger.info('no gradient calibration: %s', exc)
        return None


def _scalar_probes(problem, bracket, solution, report, C_cal, options):
    """Gradient-bound and minimal-selection certificates at the fixed point; reported only."""
    certificates = []
    rhs = FrozenRHS.scalar(problem, solution, bracket)
    if C_cal is not None:
        try:
            check = gradient_bound_check(report, rhs.sup(solution.values), problem.operator,
                                         C_cal, rhs=rhs, bracket=bracket, tol=options.tol)
            exponents = ' '.join(f'{p["exponent"]:.4f}' for p in check['probes'])
            certificates.append(_certificate(
                'gradient_bound', check['ok'],
                f'margin={check["margin"]:.3e} C_cal={C_cal:.4g} exponents={exponents}'))
        except SolverError as exc:
            certificates.append(_certificate('gradient_bound', False, str(exc)))
    if bracket is not None and options.n_starts > 1:
        try:
            probe = minimal_selection_probe(problem, bracket, solution, options.n_starts,
                                            options.seed, options.tol)
            gap = float(np.max(np.abs(probe['min_candidate'].values - solution.values)))
            certificates.append(_certificate(
                'minimal_selection', not probe['incomparable'],
                f'candidates={len(probe["candidates"])} distance_to_solution={gap:.3e}'))
        except SolverError as exc:
            certificates.append(_certificate('minimal_selection', False, str(exc)))
    return certificates


def solve_pipeline(config, out_dir):
    recipe, options = config.recipe, config.solver
    problem = recipe.build()
    bracket = recipe.build_bracket(problem)
    solve = dict(tol_fp=options.tol_fp, max_outer=options.max_outer, tol=options.tol,
                 max_newton=options.max_newton)
    C_cal = None
    try:
        if problem.arity == 'system':
            solution, trace = iterate_system(problem, bracket, M=options.gradient_cap, **solve)
        else:
            C_cal = _calibration(problem, options)
            u, trace = iterate_scalar(problem, bracket, C_cal=C_cal, **solve)
            solution = (u,)
    except SolverError as exc:
        if exc.trace is not None:
            write_csv(os.path.join(out_dir, 'trace.csv'), TRACE_COLUMNS, exc.trace.to_rows())
        raise
    reports = _final_reports(problem, bracket, solution, options)

    certificates = []
    brackets = bracket if isinstance(bracket, tuple) else (bracket,)
    for b in brackets:
        if b is not None:
            record = b.to_record()
            certificates.append(_certificate('bracket', True, ' '.join(
                f'{k}={v}' for k, v in record.items() if v is not None)))
    final = trace.final
    certificates.append(_certificate(
        'fixed_point', trace.residual_ok,
        f'residual={final["unfrozen_residual"]:.3e} tol_res={trace.tol_res:.3e}'))
    ratios = trace.contraction_ratios()
    worst_ratio = max(ratios) if ratios else 0.0
    certificates.append(_certificate(
        'contraction', worst_ratio <= CONTRACTION_LIMIT, f'max_ratio={worst_ratio:.4f}'))

    asserted = [trace.residual_ok]
    if problem.arity == 'system':
        margins = [r['margin_grad'] for r in trace.records]
        trapped = not trace.spurious and min(margins) >= 0
        certificates.append(_certificate(
            'trapping', trapped,
            f'min_margin_grad={min(margins):.3e} spurious={trace.spurious}'))
        asserted.append(trapped)
    elif bracket is not None:
        report = reports[0]
        certificates.append(_certificate(
            'comparison', report.comparison_ok,
            f'min(u - u_sub)={report.comparison_min:.3e}'))
        asserted.append(report.comparison_ok)
    if problem.arity == 'scalar':
        certificates.extend(_scalar_probes(problem, bracket, solution[0], reports[0], C_cal,
                                           options))
    passed = all(asserted)

    write_csv(os.path.join(out_dir, 'trace.csv'), TRACE_COLUMNS, trace.to_rows())
    write_csv(os.path.join(out_dir, 'solve.csv'), SOLVE_COLUMNS, [r.to_row() for r in reports])
    write_csv(os.path.join(out_dir, 'certificates.csv'), CERTIFICATE_COLUMNS, certificates)
    for name, field in zip(('u', 'v'), solution):
        write_field_csv(os.path.join(out_dir, f'{name}.csv'), field)

    summary = {
        'command': 'solve',
        'arity': problem.arity,
        'n_cells': recipe.n_cells,
        'outer_iterations': trace.iterations,
        'final_c1_distance': final['c1_distance'],
        'final_residual': final['unfrozen_residual'],
        'tol_res': trace.tol_res,
        'max_contraction_ratio': worst_ratio,
        'grad_sup': final['grad_sup'],
        'u_min': float(np.min(solution[0].values)),
        'u_max': float(np.max(solution[0].values)),
        'seed': options.seed,
        'warnings': len(config.warnings),
        'passed': passed,
    }
    write_summary(os.path.join(out_dir, SUMMARY_FILENAME), summary)
    return {'summary': summary, 'passed': passed, 'trace_rows': trace.to_rows(),
            'certificates': certificates}


def _experiment_for(config, kind):
    exp = config.experiment
    try:
        if exp is None:
            return ExperimentSpec(kind=kind)
        if exp.kind != kind:
            return replace(exp, kind=kind)
    except ValueError as exc:
        raise ConfigValidationError([f'[experiment] {p}' for p in str(exc).split('; ')])
    return exp


def experiment_pipeline(config, out_dir, kind):
    exp = _experiment_for(config, kind)
    result = run_experiment(exp, config.recipe, config.solver)

    write_csv(os.path.join(out_dir, f'{kind}.csv'), result['columns'], result['table'])
    for name, field in result['solutions']:
        write_field_csv(os.path.join(out_dir, f'u_{name}.csv'), field)

    certificates = []
    if kind == 'hypothesis_audit':
        certificates = result['table']
    elif 'certificate' in result:
        cert = result['certificate']
        certificates = [_certificate(
            'ordering', cert['ok'],
            f'ordered={cert["ordered"]} separated={cert["separated"]} '
            f'min_distance={cert["min_distance"]}')]
    if certificates:
        write_csv(os.path.join(out_dir, 'certificates.csv'), CERTIFICATE_COLUMNS, certificates)

    summary = {**result['summary'], 'seed': config.solver.seed,
               'warnings': len(config.warnings), 'passed': result['passed']}
    write_summary(os.path.join(out_dir, SUMMARY_FILENAME), summary)
    return {'summary': summary, 'passed': result['passed'], 'trace_rows': (),
            'certificates': certificates}


# =============================================================================
# EXECUTION
# =============================================================================

def _run_and_record(command, config_path, config, seed, error, pipeline, target):
    """Run the pipeline inside the ledger's app context and record the outcome."""
    outcome = None
    app = create_app(target)
    with app.app_context():
        if error is None:
            for warning in config.warnings:
                logger.warning('%s', warning)
            try:
                outcome = pipeline(config, app.config['OUT_DIR'])
                if not outcome['passed']:
                    raise InvariantFailed(f'{command}: asserted checks failed (see {SUMMARY_FILENAME})')
            except SolverError as exc:
                error = exc

        trace = getattr(error, 'trace', None)
        record_run(
            command,
            status='passed' if error is None else ('failed' if outcome else 'error'),
            exit_code=0 if error is None else error.exit_code,
            config_path=config_path,
            config_digest=config.digest if config is not None else None,
            seed=config.solver.seed if config is not None else seed,
            message=None if error is None else str(error),
            summary=format_summary(outcome['summary']) if outcome else None,
            trace_rows=outcome['trace_rows'] if outcome else (trace.to_rows() if trace else ()),
            certificates=outcome['certificates'] if outcome else (),
        )
    return error


def _execute(command, config_path, out_dir, seed, pipeline):
    """
    Parse, run and record one command.

    Every SolverError is reported on stderr, recorded in the ledger and
    turned into the error's exit code; a pipeline whose asserted checks
    fail exits through InvariantFailed. A config that cannot be parsed,
    given no --out, leaves no ledger behind.
    """
    started = time.perf_counter()
    config, error = None, None
    try:
        config = with_overrides(parse_config(config_path), seed=seed, output=out_dir)
    except SolverError as exc:
        error = exc
    target = config.output if config is not None else out_dir

    if target is not None:
        error = _run_and_record(command, config_path, config, seed, error, pipeline, target)
    logger.info('%s finished in %.2fs', command, time.perf_counter() - started)

    if error is not None:
        click.echo(f'error: {error}', err=True)
        click.get_current_context().exit(error.exit_code)
    click.echo(f'{command}: passed ({target})')


# =============================================================================
# COMMANDS
# =============================================================================

@click.command()
@run_options
def solve(config_path, out_dir, seed):
    """Run the unfreezing fixed point on the configured problem."""
    _execute('solve', config_path, out_dir, seed, solve_pipeline)


@click.command()
@run_options
def converge(config_path, out_dir, seed):
    """Grid-convergence study against the manufactured solution."""
    _execute('converge', config_path, out_dir, seed,
             lambda config, out: experiment_pipeline(config, out, 'convergence'))


@click.command()
@run_options
def unique(config_path, out_dir, seed):
    """Solve from several starts and compare the limits."""
    _execute('unique', config_path, out_dir, seed,
             lambda config, out: experiment_pipeline(config, out, 'uniqueness'))


@click.command()
@run_options
def multi(config_path, out_dir, seed):
    """Ordered solutions from a ladder of constant brackets."""
    _execute('multi', config_path, out_dir, seed,
             lambda config, out: experiment_pipeline(config, out, 'multiplicity'))


@click.command()
@run_options
def compare(config_path, out_dir, seed):
    """Truncation versus the eps-shift along the eps schedule."""
    _execute('compare', config_path, out_dir, seed,
             lambda config, out: experiment_pipeline(config, out, 'compare_desingularization'))


@click.command()
@run_options
def audit(config_path, out_dir, seed):
    """Report every hypothesis certificate; never fails on a violated one."""
    _execute('audit', config_path, out_dir, seed,
             lambda config, out: experiment_pipeline(config, out, 'hypothesis_audit'))


@click.command()
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), default='out',
              help='Output directory holding the ledger.')
@click.option('--limit', type=click.IntRange(min=1), default=20)
def history(out_dir, limit):
    """List the most recent runs recorded in the ledger."""
    app = create_app(out_dir)
    with app.app_context():
        runs = recent_runs(limit)
        if not runs:
            click.echo('no runs recorded')
            return
        for run in runs:
            click.echo(f'{run.id:4d}  {run.created_at:%Y-%m-%d %H:%M:%S}  {run.command:<8} '
                       f'{run.status:<7} exit={run.exit_code}  {run.config_path or "-"}')


def register_commands(group):
    """Register all commands on the top-level group."""
    group.add_command(solve)
    group.add_command(converge)
    group.add_command(unique)
    group.add_command(multi)
    group.add_command(compare)
    group.add_command(audit)
    group.add_command(history)

from singular_pde.models import CertificateRecord, RunRecord, TraceRecord
from singular_pde.utils.database import recent_runs, record_run


def test_record_run_with_children(ledger):
    trace = [{'iteration': 1, 'sup_distance': 0.5, 'c1_distance': 0.7, 'unfrozen_residual': 1e-3,
              'grad_sup': 2.0, 'clamp_active': False},
             {'iteration': 2, 'sup_distance': 1e-9, 'c1_distance': 2e-9,
              'unfrozen_residual': 1e-11, 'grad_sup': 2.0, 'clamp_active': True}]
    certificates = [{'certificate': 'fixed_point', 'ok': True, 'detail': 'residual=1e-11'}]
    run = record_run('solve', 'passed', config_path='run.ini', config_digest='ab' * 32, seed=3,
                     summary='passed = true\n', trace_rows=trace, certificates=certificates)
    assert run.id is not None
    assert TraceRecord.query.filter_by(run_id=run.id).count() == 2
    assert [t.clamp_active for t in sorted(run.traces, key=lambda t: t.iteration)] == [False, True]
    cert = CertificateRecord.query.one()
    assert cert.name == 'fixed_point' and cert.ok
    assert run.created_at is not None


def test_recent_runs_newest_first(ledger):
    for command in ('solve', 'unique', 'audit'):
        record_run(command, 'passed')
    runs = recent_runs(limit=2)
    assert [r.command for r in runs] == ['audit', 'unique']
    assert RunRecord.query.count() == 3


def test_failed_run_keeps_its_message(ledger):
    record_run('solve', 'error', exit_code=2, message='config file not found: x.ini')
    run = recent_runs(1)[0]
    assert run.exit_code == 2
    assert 'not found' in run.message
    assert run.traces == [] and run.certificates == []

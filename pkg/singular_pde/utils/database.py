from ..models import CertificateRecord, RunRecord, TraceRecord, db


def record_run(command, status, exit_code=0, config_path=None, config_digest=None, seed=None,
               message=None, summary=None, trace_rows=(), certificates=()):
    """
    Add one run to the ledger with its trace rows and certificates.
    Must be called inside the app context.
    """
    run = RunRecord(command=command, status=status, exit_code=exit_code,
                    config_path=config_path, config_digest=config_digest, seed=seed,
                    message=message, summary=summary)
    db.session.add(run)
    for row in trace_rows:
        run.traces.append(TraceRecord(
            iteration=row['iteration'],
            sup_distance=row.get('sup_distance'),
            c1_distance=row.get('c1_distance'),
            unfrozen_residual=row.get('unfrozen_residual'),
            grad_sup=row.get('grad_sup'),
            clamp_active=bool(row.get('clamp_active')),
        ))
    for cert in certificates:
        run.certificates.append(CertificateRecord(name=cert['certificate'], ok=cert['ok'],
                                                  detail=cert.get('detail')))
    db.session.commit()
    return run


def recent_runs(limit=20):
    """Most recent runs first."""
    return RunRecord.query.order_by(RunRecord.id.desc()).limit(limit).all()

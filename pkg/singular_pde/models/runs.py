from .base import TimestampMixin, db


class RunRecord(TimestampMixin, db.Model):
    """One CLI invocation: what ran, on which config, and how it ended."""
    __tablename__ = 'runs'

    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(30), nullable=False)  # solve, converge, unique, ...
    config_path = db.Column(db.String(500))
    config_digest = db.Column(db.String(64))  # sha256 of the normalized config
    seed = db.Column(db.Integer)
    status = db.Column(db.String(20), nullable=False)  # passed, failed, error
    exit_code = db.Column(db.Integer, default=0)
    message = db.Column(db.Text)
    summary = db.Column(db.Text)  # key = value lines, as in summary.txt

    traces = db.relationship('TraceRecord', backref='run', lazy=True, cascade='all, delete-orphan')
    certificates = db.relationship('CertificateRecord', backref='run', lazy=True,
                                   cascade='all, delete-orphan')

    def __repr__(self):
        return f'<RunRecord {self.command} status={self.status}>'


class TraceRecord(db.Model):
    """One outer fixed-point iteration of a recorded run."""
    __tablename__ = 'trace_rows'

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey('runs.id'), nullable=False)
    iteration = db.Column(db.Integer, nullable=False)
    sup_distance = db.Column(db.Float)
    c1_distance = db.Column(db.Float)
    unfrozen_residual = db.Column(db.Float)
    grad_sup = db.Column(db.Float)
    clamp_active = db.Column(db.Boolean, default=False)

    def __repr__(self):
        return f'<TraceRecord run={self.run_id} k={self.iteration}>'


class CertificateRecord(db.Model):
    """A bracket or hypothesis certificate attached to a run."""
    __tablename__ = 'certificates'

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey('runs.id'), nullable=False)
    name = db.Column(db.String(50), nullable=False)
    ok = db.Column(db.Boolean)
    detail = db.Column(db.Text)

    def __repr__(self):
        return f'<CertificateRecord {self.name} ok={self.ok}>'

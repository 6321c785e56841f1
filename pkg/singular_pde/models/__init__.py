from .base import db
from .runs import CertificateRecord, RunRecord, TraceRecord

__all__ = ['db', 'RunRecord', 'TraceRecord', 'CertificateRecord']

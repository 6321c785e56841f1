"""
Singular convective quasilinear elliptic solver - app factory for the run ledger
"""
import os

from flask import Flask

from .config.settings import LEDGER_FILENAME
from .models import db


def create_app(out_dir):
    """Create the Flask app whose database is the run ledger in `out_dir`."""
    app = Flask(__name__)

    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)

    app.config['SQLALCHEMY_DATABASE_URI'] = f'sqlite:///{os.path.join(out_dir, LEDGER_FILENAME)}'
    app.config['SQLALCHEMY_TRACK_MODIFICATIONS'] = False
    app.config['OUT_DIR'] = out_dir

    db.init_app(app)

    with app.app_context():
        db.create_all()

    return app

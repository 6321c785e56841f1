import os

import numpy as np
import pytest

from singular_pde import create_app
from singular_pde.grid import build_grid
from singular_pde.models import db
from singular_pde.operators import OperatorSpec
from singular_pde.problems import ScalarProblem
from singular_pde.reactions import ReactionSpec, ReactionTerm, h_family

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')


@pytest.fixture
def config_dir():
    return CONFIG_DIR


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def interval():
    return build_grid((0.0, 1.0), 32)


@pytest.fixture
def square():
    return build_grid(((0.0, 1.0), (0.0, 1.0)), 6)


@pytest.fixture
def robin():
    return OperatorSpec('r_laplacian', 2.0, lam=0.0, beta=1.0, bc='robin')


@pytest.fixture
def headline_problem():
    """h = s^-1/2 + s + 0.1|xi|, p = 2, Robin beta = 1 on 64 cells."""
    spec = OperatorSpec('r_laplacian', 2.0, lam=0.0, beta=1.0, bc='robin')
    return ScalarProblem(build_grid((0.0, 1.0), 64), spec, h_family(2.0, 0.5, convection=0.1))


@pytest.fixture
def source_reaction():
    def make(text='1'):
        return ReactionSpec('scalar', (ReactionTerm('source', 1.0, text),))
    return make


@pytest.fixture
def write_config(tmp_path):
    """Write INI text to tmp_path and return its path."""
    def write(text, name='run.ini'):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


@pytest.fixture
def ledger(tmp_path):
    app = create_app(str(tmp_path / 'ledger'))
    with app.app_context():
        yield db
        db.session.remove()

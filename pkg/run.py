#!/usr/bin/env python
"""
Singular Convective Solver - Entry Point

Run a config through one of the batch commands:
    python run.py solve --config configs/headline.ini --out results/headline
    python run.py --verbose converge --config configs/manufactured_robin.ini

List recorded runs:
    python run.py history --out results/headline
"""
from singular_pde.cli import cli

if __name__ == '__main__':
    cli()

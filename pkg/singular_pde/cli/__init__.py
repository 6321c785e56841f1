"""
Command line front end:

    python run.py [--verbose] solve --config run.ini --out results/
"""
import logging

import click

from .commands import register_commands

LOG_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'


@click.group()
@click.option('--verbose', is_flag=True, help='Log at DEBUG level.')
def cli(verbose):
    """Singular convective quasilinear elliptic solver."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


register_commands(cli)

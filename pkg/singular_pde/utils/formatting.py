"""
Formatting utilities for run reports: CSV tables, per-node field dumps and
the key = value summary. Floats are written with FLOAT_FORMAT so that
identical runs produce byte-identical files.
"""
import csv
import os

import numpy as np

from ..config.settings import FLOAT_FORMAT


def format_value(value):
    """Render one cell: fixed float format, empty for None, plain str otherwise."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if isinstance(value, (list, tuple)):
        return ' '.join(format_value(v) for v in value)
    return str(value)


def write_csv(path, columns, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
    return path


def write_field_csv(path, field):
    """One row per node: coordinates then value."""
    names = ['x', 'y'][:field.grid.dimension] + ['value']
    rows = [dict(zip(names, [*coords, value]))
            for coords, value in zip(field.grid.coords, field.values)]
    return write_csv(path, names, rows)


def format_summary(summary):
    return ''.join(f'{key} = {format_value(value)}\n' for key, value in summary.items())


def write_summary(path, summary):
    with open(path, 'w') as handle:
        handle.write(format_summary(summary))
    return path

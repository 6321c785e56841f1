"""
Closed-form coefficient fields and manufactured solutions, compiled with sympy.
"""
from functools import lru_cache

import numpy as np
import sympy as sym

X, Y = sym.symbols('x y', real=True)


def parse_expression(text):
    """Parse a field expression in x (and y); raises ValueError on bad input."""
    try:
        expr = sym.sympify(text, locals={'x': X, 'y': Y, 'pi': sym.pi})
    except (sym.SympifyError, TypeError, SyntaxError) as exc:
        raise ValueError(f'cannot parse expression {text!r}: {exc}') from exc
    extra = expr.free_symbols - {X, Y}
    if extra:
        names = ', '.join(sorted(str(s) for s in extra))
        raise ValueError(f'expression {text!r} uses unknown symbols: {names}')
    return expr


def _lambdify(expr):
    fn = sym.lambdify((X, Y), expr, modules='numpy')

    def evaluate(coords):
        coords = np.atleast_2d(coords)
        x = coords[:, 0]
        y = coords[:, 1] if coords.shape[1] > 1 else np.zeros_like(x)
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape).copy()

    return evaluate


@lru_cache(maxsize=256)
def compile_field(text):
    """Return a vectorized evaluator coords (n, dim) -> values (n,)."""
    return _lambdify(parse_expression(text))


def compile_sympy(expr):
    return _lambdify(expr)


def gradient_exprs(expr, dimension):
    return [sym.diff(expr, v) for v in (X, Y)[:dimension]]

"""
Exceptions raised by the solver pipeline, each tagged with a CLI exit code.
"""
from .config.settings import EXIT_CODES


class SolverError(Exception):
    """Base class; `report` / `trace` carry whatever was computed before failing."""
    exit_code = EXIT_CODES['solver']

    def __init__(self, message, report=None, trace=None):
        super().__init__(message)
        self.report = report
        self.trace = trace


class ParseError(SolverError):
    exit_code = EXIT_CODES['validation']

    def __init__(self, message, line=None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class ConfigValidationError(SolverError):
    exit_code = EXIT_CODES['validation']

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__('invalid config:\n  ' + '\n  '.join(self.messages))


class SingularDomain(SolverError, ValueError):
    """A singular reaction was evaluated at a nonpositive argument."""


class NonFiniteEnergy(SolverError):
    pass


class LineSearchStall(SolverError):
    pass


class MaxItersExceeded(SolverError):
    pass


class NotASubsolution(SolverError):
    exit_code = EXIT_CODES['bracket']

    def __init__(self, message, node=None, margin=None):
        super().__init__(message)
        self.node = node
        self.margin = margin


class BracketViolation(SolverError):
    exit_code = EXIT_CODES['bracket']


class BracketLadderFailed(SolverError):
    exit_code = EXIT_CODES['bracket']


class NoConvergence(SolverError):
    exit_code = EXIT_CODES['no_convergence']


class TrappingExit(SolverError):
    exit_code = EXIT_CODES['no_convergence']


class InvariantFailed(SolverError):
    """An experiment ran to completion but one of its asserted checks failed."""

"""
Exception hierarchy and machine-readable error records for the pricing engine.
"""
import time
from datetime import datetime, timezone


class PricingError(Exception):
    """Base class for all engine errors."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details


class ValidationError(PricingError, ValueError):
    """An input violates a type invariant; ``field`` names the offending path."""

    exit_code = 2

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}", field=field)
        self.field = field
        self.reason = message


class NumericDomainError(PricingError, ValueError):
    """A number is non-finite or outside the domain of a formula."""

    exit_code = 3


class MeshConditionError(PricingError):
    """The grid violates a monotonicity/stability inequality."""

    exit_code = 4

    def __init__(self, inequality, report):
        super().__init__(f"mesh condition violated: {inequality}",
                         inequality=inequality, mesh=report.to_dict())
        self.inequality = inequality
        self.report = report


class DivergenceError(PricingError):
    """A time level produced a non-finite value."""

    exit_code = 5

    def __init__(self, n, i):
        super().__init__(f"non-finite value at time level {n}, node {i}", n=n, i=i)
        self.n = n
        self.i = i


class PicardIterationError(PricingError):
    """The inner iteration hit its cap before meeting the tolerance."""

    exit_code = 6

    def __init__(self, n, iterations, increment):
        super().__init__(
            f"Picard iteration did not converge at step {n} after {iterations} "
            f"sweeps (last increment {increment:.3e})",
            n=n, iterations=iterations, increment=increment)
        self.n = n
        self.iterations = iterations
        self.increment = increment


class SingularSystemError(PricingError):
    exit_code = 7


class GridMismatchError(PricingError):
    """Two solutions do not live on nested grids with a common final time."""

    exit_code = 8


class InterpolationRangeError(PricingError, ValueError):
    exit_code = 9


class NotApplicableError(PricingError):
    exit_code = 10


class StudyLevelError(PricingError):
    """Wraps a failure raised while solving one level of a convergence study."""

    exit_code = 11

    def __init__(self, level, timesteps, nodes, cause):
        super().__init__(
            f"level {level} (N={timesteps}, nodes={nodes}) failed: {cause}",
            level=level, timesteps=timesteps, nodes=nodes,
            cause=type(cause).__name__)
        self.level = level
        self.cause = cause


class ConfigParseError(PricingError):
    """The configuration text is not well-formed."""

    exit_code = 12

    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ''
        super().__init__(f"{message}{where}", line=line, column=column)
        self.line = line
        self.column = column


class ConfigValidationError(ValidationError):
    exit_code = 13


class OutputError(PricingError):
    """An output file or directory could not be written."""

    exit_code = 14

    def __init__(self, path, cause):
        super().__init__(f"cannot write {path}: {cause.strerror or cause}", path=str(path),
                         cause=type(cause).__name__)
        self.path = path
        self.cause = cause


def error_record(error, start_time=None):
    """
    Create a standardized error record for a failed run.

    Args:
        error (Exception): The exception that ended the run
        start_time (float): Optional ``time.perf_counter()`` stamp of the run start

    Returns:
        dict: Error record suitable for JSON serialisation
    """
    processing_time = time.perf_counter() - start_time if start_time else 0
    if isinstance(error, PricingError):
        exit_code = error.exit_code
        details = error.details
    else:
        exit_code = 1
        details = {}

    return {
        'success': False,
        'error': str(error),
        'error_type': type(error).__name__,
        'exit_code': exit_code,
        'details': details,
        'processing_time': round(processing_time, 4),
        'timestamp': datetime.now(timezone.utc).isoformat(),
    }

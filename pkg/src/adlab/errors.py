"""Exception and warning types shared across the package."""


class UsageError(ValueError):
    """Caller error: bad arguments, mismatched dimensions, unknown ids."""


class DiagnosticError(RuntimeError):
    """Runtime failure with a diagnosis: blow-up, non-convergence, singular system."""


class DomainWarning(RuntimeWarning):
    """An elementary operation was evaluated outside its real domain.

    The offending value becomes NaN and propagates instead of crashing.
    """

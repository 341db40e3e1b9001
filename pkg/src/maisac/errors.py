"""Exception types shared across the package."""


class MaisacError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MaisacError, ValueError):
    """A scene parameter, layout, or operation argument is out of its valid domain."""


class DegenerateDirectionError(MaisacError):
    """The MVDR distortionless direction receives zero transmit gain."""


class InvalidAnchorError(MaisacError, ValueError):
    """A linearization anchor violates the constraints it is supposed to satisfy."""


class ExtractionFailureError(MaisacError):
    """Rank-one extraction found no feasible candidate.

    The best infeasible candidate is attached as ``best_candidate``.
    """

    def __init__(self, message, best_candidate=None):
        super().__init__(message)
        self.best_candidate = best_candidate


class ProgramBuildError(MaisacError, ValueError):
    """A conic program references unknown variables or is otherwise malformed."""

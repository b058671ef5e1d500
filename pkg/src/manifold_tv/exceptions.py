"""Exception types shared by the geometry, solver and I/O layers."""


class ManifoldTVError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ManifoldTVError, ValueError):
    """Input does not satisfy a representation invariant (shape, norm, symmetry...)."""


class DomainError(ManifoldTVError, ArithmeticError):
    """A geometric operation was evaluated outside its domain.

    Typically raised when two points lie (numerically) on each other's cut
    locus, so that no unique minimizing geodesic exists.  ``pairs`` holds the
    offending inputs when they are known; the solver also fills in ``index``
    (pixel coordinates of the tuple) and ``cycle``.
    """

    def __init__(self, message, pairs=None, index=None, cycle=None):
        super().__init__(message)
        self.pairs = pairs
        self.index = index
        self.cycle = cycle


class ParseError(ManifoldTVError, ValueError):
    """A file could not be parsed; the message names the line or byte offset."""

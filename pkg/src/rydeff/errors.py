"""Exception hierarchy shared by all rydeff modules."""


class RydeffError(Exception):
    """Base class for all errors raised by rydeff."""


class InvalidSpecError(RydeffError, ValueError):
    """A lattice, parameter set or configuration violates its invariants."""


class DimensionError(RydeffError, ValueError):
    """A requested Hilbert/Liouville space exceeds the size guard, or shapes mismatch."""


class InvalidStateError(RydeffError, ValueError):
    """A density matrix or state vector is not admissible for the requested operation."""


class IncompatibleObservableError(RydeffError, ValueError):
    """The observable cannot be evaluated on the given state representation."""


class UnsupportedError(RydeffError, NotImplementedError):
    """The requested combination of options is not supported."""


class NumericalError(RydeffError, RuntimeError):
    """A numerical procedure failed (solver breakdown, norm underflow, ...)."""


class StiffnessError(NumericalError):
    """The adaptive integrator step size underflowed."""

    def __init__(self, message, smallest_step=None, time=None):
        super().__init__(message)
        self.smallest_step = smallest_step
        self.time = time


class DegenerateSteadyStateError(NumericalError):
    """The generator has more than one stationary state."""

    def __init__(self, multiplicity):
        super().__init__(f"stationary subspace is degenerate (multiplicity {multiplicity})")
        self.multiplicity = multiplicity


class InvalidGeneratorError(NumericalError):
    """A superoperator has eigenvalues with positive real part."""

"""Exact and effective dynamics of strongly dissipative Rydberg lattice gases.

Submodules
----------
model        lattice, interactions and parameter sets
basis        configuration indexing and diagonal energies
operators    Hamiltonians and matrix-free Lindblad generators
evolution    time integration, stationary states, trace distance
qjmc         quantum-jump Monte Carlo for the two-level gas
rates        classical rate equations from adiabatic elimination (orders 2 and 4)
kmc          Gillespie sampling of the second-order rate equation
eit          reduced dynamics for the three-level EIT ladder
nz           brute-force projection-operator expansion (reference oracle)
observables  densities, correlations and coherences
cli          ``rydeff`` command-line runner
"""
from .errors import (DegenerateSteadyStateError, DimensionError, IncompatibleObservableError,
                     InvalidGeneratorError, InvalidSpecError, InvalidStateError, NumericalError,
                     RydeffError, StiffnessError, UnsupportedError)
from .model import (DephasingParams, EitParams, InteractionMatrix, LatticeSpec,
                    build_chain_interactions)
from .evolution import TimeGrid, TrajectoryRecord, integrate, steady_state, trace_distance

__all__ = [
    "DephasingParams", "EitParams", "InteractionMatrix", "LatticeSpec", "build_chain_interactions",
    "TimeGrid", "TrajectoryRecord", "integrate", "steady_state", "trace_distance",
    "RydeffError", "InvalidSpecError", "DimensionError", "InvalidStateError",
    "IncompatibleObservableError", "UnsupportedError", "NumericalError", "StiffnessError",
    "DegenerateSteadyStateError", "InvalidGeneratorError",
]

__version__ = "0.1.0"

"""Errors raised by the laboratory."""
from typing import Optional

import numpy as np


class LabError(Exception):
    """Base class for every error raised on purpose by relulab."""


class DimensionError(LabError):
    """Operation only defined for input dimension d = 1."""

    def __init__(self, operation: str, d: int):
        super().__init__(f"{operation} requires input dimension d = 1, got d = {d}")
        self.operation = operation
        self.d = d


class ShapeError(LabError):
    """Network shape or vector length does not fit the operation."""


class NeuronIndexError(LabError, IndexError):
    def __init__(self, i: int, width: int):
        super().__init__(f"neuron index {i} outside [1, {width}]")
        self.i = i
        self.width = width


class AmbiguousClassificationError(LabError):
    """Two ladder rungs lie within the classification tolerance."""


class SolverError(LabError):
    """Gradient-flow integration could not continue."""

    def __init__(self, message: str, t: float, state: Optional[np.ndarray] = None):
        super().__init__(message)
        self.t = t
        self.state = None if state is None else np.array(state, copy=True)


class StepSizeUnderflowError(SolverError):
    def __init__(self, t: float, dt: float, dt_min: float, state: np.ndarray):
        super().__init__(
            f"step size {dt:.3e} fell below dt_min={dt_min:.3e} at t={t:.6g}; state={np.array2string(state, precision=6)}",
            t,
            state,
        )
        self.dt = dt


class NonFiniteStateError(SolverError):
    def __init__(self, t: float, state: np.ndarray):
        super().__init__(
            f"non-finite state at t={t:.6g}; state={np.array2string(state, precision=6)}",
            t,
            state,
        )


class DomainMismatchError(LabError):
    """Target pieces do not tile the integration domain."""


class ConfigError(LabError):
    """Experiment configuration file is missing, unreadable or malformed."""

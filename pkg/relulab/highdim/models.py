from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator


class MCEstimate(BaseModel):
    """
    Sample mean with its standard error. Scalar estimates (risk) hold floats,
    vector estimates (gradient) hold tuples of matching length.
    """
    mean: float | Tuple[float, ...]
    std_error: float | Tuple[float, ...]
    n_samples: PositiveInt
    seed: int = Field(ge=0, lt=2 ** 64)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def _check_errors(self) -> 'MCEstimate':
        if np.shape(self.mean) != np.shape(self.std_error):
            raise ValueError('mean and std_error must have the same shape')
        if np.any(np.asarray(self.std_error) < 0.0):
            raise ValueError('std_error entries must be non-negative')
        return self

    @property
    def mean_array(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.mean, dtype=float))

    @property
    def std_error_array(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.std_error, dtype=float))

    def within(self, exact: float | Sequence[float] | np.ndarray, sigmas: float = 4.0, slack: float = 1e-12) -> bool:
        """Every component lies within `sigmas` standard errors of `exact`."""
        deviation = np.abs(self.mean_array - np.atleast_1d(np.asarray(exact, dtype=float)))
        return bool(np.all(deviation <= sigmas * self.std_error_array + slack))


class LinearTarget(BaseModel):
    """x -> <slopes, x> + intercept evaluated on an (n, d) batch"""
    slopes: Tuple[float, ...]
    intercept: float = 0.0

    model_config = ConfigDict(frozen=True)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return points @ np.asarray(self.slopes) + self.intercept

from enum import Enum
from functools import cached_property
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeFloat


class RiskReport(BaseModel):
    """Risk, generalized gradient and its Euclidean norm at one parameter"""
    risk: NonNegativeFloat
    gradient: Tuple[float, ...]
    grad_norm: NonNegativeFloat

    model_config = ConfigDict(frozen=True)

    @cached_property
    def gradient_array(self) -> np.ndarray:
        arr = np.array(self.gradient, dtype=float)
        arr.flags.writeable = False
        return arr


class ResidualMoments(BaseModel):
    """rho-weighted integrals of res = N - f against 1, x and f"""
    zeroth: float
    first: float
    target: float

    model_config = ConfigDict(frozen=True)


class FiniteDifferenceVerdict(str, Enum):
    AGREES = 'agrees'
    DISAGREES = 'disagrees'
    # Differentiability hypothesis not met; comparison is informative only
    EXCLUDED = 'excluded'


class FiniteDifferenceCheck(BaseModel):
    verdict: FiniteDifferenceVerdict
    deviation: NonNegativeFloat
    tolerance: NonNegativeFloat
    finite_difference: Tuple[float, ...]
    gradient: Tuple[float, ...]

    model_config = ConfigDict(frozen=True)


class GradientBoundCheck(BaseModel):
    """|G|^2 against 4 L (A^2 (d+1) |theta|^2 + 1) mu(box)"""
    lhs: NonNegativeFloat
    rhs: NonNegativeFloat
    ok: bool

    model_config = ConfigDict(frozen=True)

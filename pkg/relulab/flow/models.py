from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)

from network.models import DomainMeasure, NetworkShape, ParamVector, Target


class FlowConfig(BaseModel):
    """Step-size control of the gradient-flow integrator"""
    t_end: float = Field(default=100.0, gt=0)
    dt_init: float = Field(default=1e-3, gt=0)
    dt_min: float = Field(default=1e-12, gt=0)
    dt_max: float = Field(default=10.0, gt=0)
    rk_tol: float = Field(default=1e-10, gt=0)
    # Crossing times are located within event_tol * max(1, t)
    event_tol: float = Field(default=1e-12, gt=0)
    # Thinning of the written trajectory; the monitors always see every accepted step
    sample_stride: PositiveInt = 1
    max_steps: PositiveInt = 2_000_000

    model_config = ConfigDict(frozen=True, extra='forbid')

    @model_validator(mode='after')
    def _check_steps(self) -> 'FlowConfig':
        if not self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError(
                f'need dt_min <= dt_init <= dt_max, got {self.dt_min}, {self.dt_init}, {self.dt_max}'
            )
        return self


class SolverStats(BaseModel):
    accepted: NonNegativeInt = 0
    rejected: NonNegativeInt = 0
    events: NonNegativeInt = 0
    # Trial steps spent locating crossings
    bisections: NonNegativeInt = 0


class KinkEvent(BaseModel):
    """An activation pattern change: some kink crossed a domain end or a target knot"""
    t: float
    neurons: Tuple[int, ...]

    model_config = ConfigDict(frozen=True)


class Trajectory(BaseModel):
    """
    Samples of a gradient-flow run on the accepted-step grid.

    `dissipation`, `risk_integral`, `target_moment_integral` and
    `residual_integral` are the solver's own quadratures from 0 to t of |G|^2,
    L, rho int f (N - f) and rho int (N - f). They ride along as extra state
    components and are as accurate as the parameters.
    """
    shape: NetworkShape
    target: Target
    domain: DomainMeasure
    xi: float
    times: np.ndarray
    params: np.ndarray
    risk: np.ndarray
    grad_norm: np.ndarray
    W: np.ndarray
    V: np.ndarray
    dissipation: np.ndarray
    risk_integral: np.ndarray
    target_moment_integral: np.ndarray
    residual_integral: np.ndarray
    events: Tuple[KinkEvent, ...] = ()
    stats: SolverStats = Field(default_factory=SolverStats)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode='after')
    def _check_series(self) -> 'Trajectory':
        n = self.times.shape[0]
        if n == 0 or self.times[0] != 0.0:
            raise ValueError('trajectory must start at t = 0')
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError('trajectory times must be strictly increasing')
        series = (
            self.risk, self.grad_norm, self.V,
            self.dissipation, self.risk_integral, self.target_moment_integral, self.residual_integral,
        )
        if any(s.shape != (n,) for s in series):
            raise ValueError('every monitor series needs one value per time')
        if self.params.shape != (n, self.shape.dim) or self.W.shape != (n, self.shape.H):
            raise ValueError('parameter or balancedness series has the wrong shape')
        if np.any(self.risk < 0.0):
            raise ValueError('risk series must be non-negative')
        return self

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def param_at(self, k: int) -> ParamVector:
        return ParamVector.from_array(self.shape, self.params[k])

    @property
    def initial(self) -> ParamVector:
        return self.param_at(0)

    @property
    def final(self) -> ParamVector:
        return self.param_at(-1)

    def coupling_integral(self, xi: float) -> np.ndarray:
        """int_0^t rho int (f - xi)(N - f) ds at every sample."""
        return self.target_moment_integral - xi * self.residual_integral

    def sample_indices(self, stride: int) -> np.ndarray:
        """Every stride-th sample, always keeping the first and the last one."""
        idx = np.arange(0, len(self), stride)
        if idx[-1] != len(self) - 1:
            idx = np.append(idx, len(self) - 1)
        return idx


# ========== Monitor results ==========

class LyapunovCheck(BaseModel):
    max_violation: float
    ok: bool

    model_config = ConfigDict(frozen=True)


class BoundednessCheck(BaseModel):
    bound: NonNegativeFloat
    max_norm_while_above: NonNegativeFloat
    ok: bool

    model_config = ConfigDict(frozen=True)


class LimsupCheck(BaseModel):
    terminal_risk: NonNegativeFloat
    const_bound: NonNegativeFloat
    ok: bool

    model_config = ConfigDict(frozen=True)


class ConditionalStatus(str, Enum):
    PASS = 'pass'
    FAIL = 'fail'
    NOT_APPLICABLE = 'not_applicable'


class ConditionalConvergenceCheck(BaseModel):
    status: ConditionalStatus
    threshold: Optional[NonNegativeFloat] = None
    initial_risk: NonNegativeFloat
    terminal_risk: NonNegativeFloat
    reason: str = ''

    model_config = ConfigDict(frozen=True)

from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, NonNegativeFloat, NonNegativeInt, PositiveInt, model_validator


ZERO = 'ZERO'


class Rung(BaseModel):
    """One attainable critical risk value; n is None for the zero rung"""
    n: Optional[NonNegativeInt] = None
    value: NonNegativeFloat

    model_config = ConfigDict(frozen=True)

    @property
    def is_zero(self) -> bool:
        return self.n is None

    @property
    def label(self) -> str:
        return ZERO if self.n is None else str(self.n)


class RiskLadder(BaseModel):
    """
    Critical risk values rho alpha^2 (b - a)^3 / (12 (n + 1)^4) for even
    n <= 2 floor(H/2), followed by the zero rung. Sorted by decreasing value.
    """
    rungs: Tuple[Rung, ...]
    H: PositiveInt
    alpha: FiniteFloat
    a: FiniteFloat
    b: FiniteFloat
    rho: FiniteFloat = Field(gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def _check_rungs(self) -> 'RiskLadder':
        if not self.rungs or not self.rungs[-1].is_zero:
            raise ValueError('ladder must end with the zero rung')
        values = [rung.value for rung in self.rungs]
        if any(later >= earlier for earlier, later in zip(values, values[1:])):
            raise ValueError('ladder rungs must be strictly decreasing')
        return self

    @property
    def min_positive(self) -> Optional[float]:
        positive = [rung.value for rung in self.rungs if not rung.is_zero]
        return min(positive) if positive else None

    @property
    def min_gap(self) -> Optional[float]:
        values = [rung.value for rung in self.rungs]
        gaps = [earlier - later for earlier, later in zip(values, values[1:])]
        return min(gaps) if gaps else None


class DiagnosticStatus(str, Enum):
    OK = 'ok'
    VIOLATED = 'violated'
    # Risk above the threshold under which the statement applies
    NOT_APPLICABLE = 'not_applicable'


class SmallRiskReport(BaseModel):
    """Structural facts about a width-one network whose risk is small"""
    risk: NonNegativeFloat
    threshold: NonNegativeFloat
    const_risk: NonNegativeFloat
    sign: DiagnosticStatus
    active: DiagnosticStatus
    slope_product: NonNegativeFloat
    slope_lower_bound: Optional[NonNegativeFloat] = None
    slope: DiagnosticStatus

    model_config = ConfigDict(frozen=True)

    @property
    def violations(self) -> list[str]:
        checks = {'sign': self.sign, 'active': self.active, 'slope': self.slope}
        return [name for name, status in checks.items() if status is DiagnosticStatus.VIOLATED]

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeFloat, PositiveInt


class SmoothActivation(BaseModel):
    """
    C^1 ramp approximating max{x, 0}.

    Zero up to 1/(2r), identity from 1/r on, and on the window in between the
    cubic Hermite interpolant of (0, 0) and (1/r, 1). With t the position in
    the window the derivative is 10t - 9t^2, so it stays in [0, 25/9].
    """
    r: PositiveInt

    model_config = ConfigDict(frozen=True)

    @property
    def window(self) -> Tuple[float, float]:
        return 0.5 / self.r, 1.0 / self.r

    def _position(self, x: np.ndarray) -> np.ndarray:
        lo, _ = self.window
        return np.clip((x - lo) / lo, 0.0, 1.0)

    def value(self, x: np.ndarray | float) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        lo, hi = self.window
        t = self._position(arr)
        ramp = hi * (3.0 * t ** 2 - 2.0 * t ** 3) + lo * (t ** 3 - t ** 2)
        out = np.where(arr >= hi, arr, np.where(arr <= lo, 0.0, ramp))
        return float(out) if out.ndim == 0 else out

    def deriv(self, x: np.ndarray | float) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        lo, hi = self.window
        t = self._position(arr)
        out = np.where(arr >= hi, 1.0, np.where(arr <= lo, 0.0, 10.0 * t - 9.0 * t ** 2))
        return float(out) if out.ndim == 0 else out


class GradientLimitError(BaseModel):
    """Distance of the smoothed risk and gradient from the exact ones at one r"""
    r: PositiveInt
    risk_error: NonNegativeFloat
    gradient_error: NonNegativeFloat

    model_config = ConfigDict(frozen=True)

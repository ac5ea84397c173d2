"""Parameter layout, input domain, targets and the geometry of active regions."""
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FiniteFloat,
    PositiveInt,
    computed_field,
    field_validator,
    model_validator,
)

from relulab.exceptions import NeuronIndexError


# Pieces must meet within this distance; values must agree within it (relative)
TILING_TOLERANCE = 1e-12


class ActivationConvention(str, Enum):
    """Which boundary points count as active when forming gradient integrals."""
    STRICT = 'strict'    # indicator of (0, inf)
    CLOSED = 'closed'    # indicator of [0, inf)


# ========== Network ==========

class NetworkShape(BaseModel):
    """Input dimension d and hidden width H of a one-hidden-layer network"""
    d: PositiveInt
    H: PositiveInt

    model_config = ConfigDict(frozen=True)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def dim(self) -> int:
        return self.d * self.H + 2 * self.H + 1

    def check_neuron(self, i: int) -> None:
        if not 1 <= i <= self.H:
            raise NeuronIndexError(i, self.H)


class ParamVector(BaseModel):
    """
    Flat parameter vector with named views.

    Layout (1-based, as in the literature): w(i, j) = values[(i-1)d + j],
    b(i) = values[Hd + i], v(i) = values[H(d+1) + i], c = values[dim].
    Internally everything is 0-based; the properties below are the only place
    that knows the offsets.
    """
    shape: NetworkShape
    values: Tuple[float, ...]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def _check_length(self) -> 'ParamVector':
        if len(self.values) != self.shape.dim:
            raise ValueError(
                f'expected {self.shape.dim} parameters for d={self.shape.d}, H={self.shape.H}, '
                f'got {len(self.values)}'
            )
        return self

    # ---- construction ----

    @classmethod
    def from_array(cls, shape: NetworkShape, array: Sequence[float] | np.ndarray) -> 'ParamVector':
        return cls(shape=shape, values=tuple(np.asarray(array, dtype=float).ravel().tolist()))

    @classmethod
    def from_parts(
        cls,
        w: Sequence[float] | np.ndarray,
        b: Sequence[float] | np.ndarray,
        v: Sequence[float] | np.ndarray,
        c: float,
    ) -> 'ParamVector':
        """Assemble from views; w may be (H,) for d = 1 or (H, d)."""
        b_arr = np.asarray(b, dtype=float).ravel()
        H = b_arr.size
        w_arr = np.asarray(w, dtype=float).reshape(H, -1)
        shape = NetworkShape(d=w_arr.shape[1], H=H)
        flat = np.concatenate([w_arr.ravel(), b_arr, np.asarray(v, dtype=float).ravel(), [float(c)]])
        return cls.from_array(shape, flat)

    @classmethod
    def zeros(cls, shape: NetworkShape) -> 'ParamVector':
        return cls.from_array(shape, np.zeros(shape.dim))

    def replace(
        self,
        w: Optional[Sequence[float] | np.ndarray] = None,
        b: Optional[Sequence[float] | np.ndarray] = None,
        v: Optional[Sequence[float] | np.ndarray] = None,
        c: Optional[float] = None,
    ) -> 'ParamVector':
        """Write through the views; unspecified views are kept."""
        return ParamVector.from_parts(
            self.w if w is None else w,
            self.b if b is None else b,
            self.v if v is None else v,
            self.c if c is None else c,
        )

    # ---- views ----

    @cached_property
    def array(self) -> np.ndarray:
        arr = np.array(self.values, dtype=float)
        arr.flags.writeable = False
        return arr

    @property
    def w(self) -> np.ndarray:
        """Inner weights as an (H, d) matrix."""
        d, H = self.shape.d, self.shape.H
        return self.array[: H * d].reshape(H, d)

    @property
    def b(self) -> np.ndarray:
        d, H = self.shape.d, self.shape.H
        return self.array[H * d: H * (d + 1)]

    @property
    def v(self) -> np.ndarray:
        d, H = self.shape.d, self.shape.H
        return self.array[H * (d + 1): H * (d + 2)]

    @property
    def c(self) -> float:
        return float(self.array[-1])

    def w_at(self, i: int, j: int = 1) -> float:
        self.shape.check_neuron(i)
        if not 1 <= j <= self.shape.d:
            raise IndexError(f'input coordinate {j} outside [1, {self.shape.d}]')
        return float(self.array[(i - 1) * self.shape.d + (j - 1)])

    def b_at(self, i: int) -> float:
        self.shape.check_neuron(i)
        return float(self.b[i - 1])

    def v_at(self, i: int) -> float:
        self.shape.check_neuron(i)
        return float(self.v[i - 1])

    def norm_squared(self) -> float:
        return float(self.array @ self.array)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.shape == other.shape and self.values == other.values

    def __hash__(self) -> int:
        return hash((self.shape, self.values))


# ========== Input data ==========

class DomainMeasure(BaseModel):
    """Uniform density rho against Lebesgue measure on the box [a, b]^d"""
    a: FiniteFloat
    b: FiniteFloat
    rho: FiniteFloat = Field(default=1.0, gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def _check_order(self) -> 'DomainMeasure':
        if not self.b > self.a:
            raise ValueError(f'domain requires b > a, got a={self.a}, b={self.b}')
        return self

    @property
    def length(self) -> float:
        return self.b - self.a

    def mass(self, d: int = 1) -> float:
        return self.rho * self.length ** d

    @property
    def bound(self) -> float:
        """max{|a|, |b|, 1}, the input-size constant of the gradient estimate."""
        return max(abs(self.a), abs(self.b), 1.0)


class TargetPiece(BaseModel):
    """f(x) = slope * x + intercept on [x_lo, x_hi]"""
    x_lo: FiniteFloat
    x_hi: FiniteFloat
    slope: FiniteFloat
    intercept: FiniteFloat

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def _check_segment(self) -> 'TargetPiece':
        if not self.x_hi > self.x_lo:
            raise ValueError(f'empty target piece [{self.x_lo}, {self.x_hi}]')
        return self

    def value(self, x: float) -> float:
        return self.slope * x + self.intercept


class Target(BaseModel):
    """Continuous piecewise-affine target on [a, b]"""
    pieces: Tuple[TargetPiece, ...]

    model_config = ConfigDict(frozen=True)

    @field_validator('pieces')
    @classmethod
    def _check_tiling(cls, pieces: Tuple[TargetPiece, ...]) -> Tuple[TargetPiece, ...]:
        if not pieces:
            raise ValueError('target needs at least one piece')
        for left, right in zip(pieces, pieces[1:]):
            if abs(left.x_hi - right.x_lo) > TILING_TOLERANCE * max(1.0, abs(left.x_hi)):
                raise ValueError(f'target pieces do not tile: gap or overlap at {left.x_hi} / {right.x_lo}')
            y_left, y_right = left.value(left.x_hi), right.value(right.x_lo)
            if abs(y_left - y_right) > 1e-9 * max(1.0, abs(y_left), abs(y_right)):
                raise ValueError(f'target is discontinuous at x={left.x_hi}: {y_left} != {y_right}')
        return pieces

    @classmethod
    def affine(cls, alpha: float, beta: float, dom: DomainMeasure) -> 'Target':
        return cls(pieces=(TargetPiece(x_lo=dom.a, x_hi=dom.b, slope=alpha, intercept=beta),))

    @property
    def lo(self) -> float:
        return self.pieces[0].x_lo

    @property
    def hi(self) -> float:
        return self.pieces[-1].x_hi

    @property
    def knots(self) -> Tuple[float, ...]:
        """Interior piece boundaries."""
        return tuple(piece.x_lo for piece in self.pieces[1:])

    def covers(self, dom: DomainMeasure) -> bool:
        tol = TILING_TOLERANCE * max(1.0, abs(dom.a), abs(dom.b))
        return abs(self.lo - dom.a) <= tol and abs(self.hi - dom.b) <= tol

    def affine_coefficients(self) -> Optional[Tuple[float, float]]:
        """(alpha, beta) when the whole target is one affine function, else None."""
        first = self.pieces[0]
        for piece in self.pieces[1:]:
            if piece.slope != first.slope or piece.intercept != first.intercept:
                return None
        return first.slope, first.intercept

    def piece_index(self, x: np.ndarray | float) -> np.ndarray:
        return np.clip(np.searchsorted(np.asarray(self.knots), x, side='right'), 0, len(self.pieces) - 1)

    def coefficients_at(self, x: np.ndarray | float) -> Tuple[np.ndarray, np.ndarray]:
        idx = self.piece_index(x)
        slopes = np.array([p.slope for p in self.pieces])
        intercepts = np.array([p.intercept for p in self.pieces])
        return slopes[idx], intercepts[idx]

    def evaluate(self, x: np.ndarray | float) -> np.ndarray | float:
        slope, intercept = self.coefficients_at(x)
        result = slope * np.asarray(x, dtype=float) + intercept
        return float(result) if np.ndim(result) == 0 else result


# ========== Active regions (d = 1) ==========

class Interval(BaseModel):
    """Subinterval of the real line with explicit endpoint membership"""
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    model_config = ConfigDict(frozen=True)

    @classmethod
    def empty(cls) -> 'Interval':
        return cls(lo=0.0, hi=0.0, lo_closed=False, hi_closed=False)

    @property
    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    @property
    def length(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    def intersection(self, other: 'Interval') -> 'Interval':
        if self.is_empty or other.is_empty:
            return Interval.empty()
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif other.lo > self.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif other.hi < self.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        result = Interval(lo=lo, hi=hi, lo_closed=lo_closed, hi_closed=hi_closed)
        return Interval.empty() if result.is_empty else result

    def __str__(self) -> str:
        if self.is_empty:
            return '{}'
        return f"{'[' if self.lo_closed else '('}{self.lo:g}, {self.hi:g}{']' if self.hi_closed else ')'}"


class Breakpoints(BaseModel):
    """
    Kinks of a d = 1 realization inside (a, b) and the active neurons on each
    of the resulting segments (1-based neuron indices).
    """
    a: float
    b: float
    kinks: Tuple[float, ...]
    kink_neurons: Tuple[frozenset[int], ...]
    patterns: Tuple[frozenset[int], ...]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def _check_structure(self) -> 'Breakpoints':
        if any(k1 >= k2 for k1, k2 in zip(self.kinks, self.kinks[1:])):
            raise ValueError('kinks must be strictly increasing')
        if len(self.kink_neurons) != len(self.kinks):
            raise ValueError('every kink needs its neurons')
        if any(not owners for owners in self.kink_neurons):
            raise ValueError('every kink must belong to at least one neuron')
        if len(self.patterns) != len(self.kinks) + 1:
            raise ValueError(f'{len(self.kinks)} kinks need {len(self.kinks) + 1} patterns')
        return self

    @property
    def edges(self) -> Tuple[float, ...]:
        return (self.a, *self.kinks, self.b)

    @property
    def segments(self) -> list[Tuple[float, float]]:
        edges = self.edges
        return list(zip(edges, edges[1:]))

"""
Experiment configuration: a YAML document validated by pydantic models.

Unknown keys are rejected at every level. See `configs/SCHEMA.md` for the
full schema and `configs/h1_small_risk.yaml` for an example.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, PositiveFloat, PositiveInt, model_validator

from relulab import settings
from relulab.exceptions import ConfigError
from network.models import DomainMeasure, NetworkShape, ParamVector, Target, TargetPiece
from flow.models import FlowConfig


logger = logging.getLogger(__name__)


class CheckName(str, Enum):
    ENERGY = 'energy'
    LYAPUNOV = 'lyapunov'
    BOUNDEDNESS = 'boundedness'
    LIMSUP = 'limsup'
    CONSERVATION = 'conservation'
    MONOTONE = 'monotone'
    CONDITIONAL = 'conditional'
    UNIFORM = 'uniform'


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class ShapeConfig(_Section):
    d: PositiveInt = 1
    H: PositiveInt

    def build(self) -> NetworkShape:
        return NetworkShape(d=self.d, H=self.H)


class DomainConfig(_Section):
    a: FiniteFloat = 0.0
    b: FiniteFloat = 1.0
    rho: PositiveFloat = 1.0

    @model_validator(mode='after')
    def _check_order(self) -> 'DomainConfig':
        if not self.b > self.a:
            raise ValueError(f'domain requires b > a, got a={self.a}, b={self.b}')
        return self

    def build(self) -> DomainMeasure:
        return DomainMeasure(a=self.a, b=self.b, rho=self.rho)


class PieceConfig(_Section):
    x_lo: FiniteFloat
    x_hi: FiniteFloat
    slope: FiniteFloat
    intercept: FiniteFloat


class TargetConfig(_Section):
    """Either an affine target (alpha, beta) or an explicit list of pieces"""
    alpha: Optional[FiniteFloat] = None
    beta: FiniteFloat = 0.0
    pieces: Optional[List[PieceConfig]] = None

    @model_validator(mode='after')
    def _check_kind(self) -> 'TargetConfig':
        if (self.alpha is None) == (self.pieces is None):
            raise ValueError('target needs exactly one of alpha or pieces')
        return self

    def build(self, dom: DomainMeasure) -> Target:
        if self.alpha is not None:
            return Target.affine(self.alpha, self.beta, dom)
        return Target(pieces=tuple(TargetPiece(**piece.model_dump()) for piece in self.pieces or ()))


class RandomInitConfig(_Section):
    """i.i.d. entries; scale defaults to 1/sqrt(H)"""
    distribution: Literal['normal', 'uniform'] = 'normal'
    scale: Optional[PositiveFloat] = None
    seed: int = Field(default=settings.DEFAULT_SEED, ge=0)

    def resolved_scale(self, shape: NetworkShape) -> float:
        return 1.0 / np.sqrt(shape.H) if self.scale is None else self.scale


class InitConfig(_Section):
    theta: Optional[Tuple[FiniteFloat, ...]] = None
    random: Optional[RandomInitConfig] = None

    @model_validator(mode='after')
    def _check_kind(self) -> 'InitConfig':
        if self.theta is not None and self.random is not None:
            raise ValueError('init takes either theta or random, not both')
        return self

    def seed(self) -> Optional[int]:
        return None if self.theta is not None else (self.random or RandomInitConfig()).seed

    def build(self, shape: NetworkShape, seed: Optional[int] = None) -> ParamVector:
        """Explicit theta, or a random draw; `seed` overrides the configured seed."""
        if self.theta is not None:
            return ParamVector.from_array(shape, self.theta)
        draw = self.random or RandomInitConfig()
        rng = np.random.default_rng(draw.seed if seed is None else seed)
        scale = draw.resolved_scale(shape)
        if draw.distribution == 'uniform':
            values = rng.uniform(-scale, scale, size=shape.dim)
        else:
            values = rng.normal(scale=scale, size=shape.dim)
        return ParamVector.from_array(shape, values)

    def describe(self, shape: NetworkShape, seed: Optional[int] = None) -> str:
        if self.theta is not None:
            return 'explicit theta'
        draw = self.random or RandomInitConfig()
        return (
            f'{draw.distribution}(0, {draw.resolved_scale(shape):.17g}) i.i.d., '
            f'seed {draw.seed if seed is None else seed}'
        )


class OutputConfig(_Section):
    directory: Path = settings.OUTPUT_DIR
    # Every stride-th accepted step goes to trajectory.csv, first and last always; defaults to flow.sample_stride
    stride: Optional[PositiveInt] = None


class ExperimentConfig(_Section):
    shape: ShapeConfig
    domain: DomainConfig = DomainConfig()
    target: TargetConfig
    init: InitConfig = InitConfig()
    flow: FlowConfig = FlowConfig()
    checks: Tuple[CheckName, ...] = ()
    output: OutputConfig = OutputConfig()

    @property
    def stride(self) -> int:
        return self.flow.sample_stride if self.output.stride is None else self.output.stride

    @model_validator(mode='after')
    def _check_consistency(self) -> 'ExperimentConfig':
        dom = self.domain.build()
        if not self.target.build(dom).covers(dom):
            raise ValueError(f'target pieces do not cover [{dom.a}, {dom.b}]')
        if self.init.theta is not None and len(self.init.theta) != self.shape.build().dim:
            raise ValueError(f'init.theta needs {self.shape.build().dim} entries, got {len(self.init.theta)}')
        return self


def load_config(path: Path | str) -> ExperimentConfig:
    """
    Read and validate a YAML experiment file. Unreadable files and YAML syntax
    errors raise ConfigError; schema violations raise pydantic's
    ValidationError.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f'cannot read config {path}: {exc}') from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f'malformed YAML in {path}: {exc}') from exc
    if not isinstance(raw, dict):
        raise ConfigError(f'config {path} must be a mapping at the top level')
    cfg = ExperimentConfig.model_validate(raw)
    logger.debug(f"Loaded config {path}: H={cfg.shape.H}, checks={[c.value for c in cfg.checks]}")
    return cfg

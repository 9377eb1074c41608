#!/usr/bin/env python3
from __future__ import annotations

import math
from enum import Enum

import attrs
from attrs import define, field
from attrs.validators import ge, gt, in_, lt, optional

from ..common.entity import BaseEntity, parse_float_tuple
from ..constants import CHECKPOINT_VERSION

__all__ = [
    "CheckpointHeader",
    "DiagnosticsRecord",
    "FailureRecord",
    "FitResult",
    "Mode",
    "PhaseSpec",
    "RunManifest",
    "SimConfig",
    "SnapshotHeader",
    "StepRecord",
    "TerminationReason",
    "Transform"
]

PERIOD2_REFERENCE_STEP = 45000
PERIOD3_REFERENCE_STEP = 60000
PERIOD_REFERENCE_N1 = 1536


class Mode(Enum):
    Euler = "euler"
    NavierStokes = "navier_stokes"


class TerminationReason(Enum):
    Completed = "completed"
    DtUnderflow = "dt_underflow"
    EndTime = "end_time"
    Failed = "failed"
    MaxSteps = "max_steps"
    NonFinite = "non_finite"


class Transform(Enum):
    Inverse = "inverse"
    InversePower = "inverse_power"
    LogCorrected = "log_corrected"
    Plain = "plain"
    Power = "power"
    Square = "square"


def _strictly_increasing(_instance, attribute: attrs.Attribute, value: tuple[float, ...]) -> None:
    if any(b <= a for a, b in zip(value, value[1:])):
        raise ValueError(f"'{attribute.name}' must be strictly increasing: {value}")


def _open_unit_interval(_instance, attribute: attrs.Attribute, value: tuple[float, ...]) -> None:
    if any(not 0.0 < v < 1.0 for v in value):
        raise ValueError(f"'{attribute.name}' must lie in (0, 1): {value}")


def _positive(_instance, attribute: attrs.Attribute, value: tuple[float, ...]) -> None:
    if any(not v > 0.0 for v in value):
        raise ValueError(f"'{attribute.name}' must be positive: {value}")


def _nearest(value: float) -> int:
    return math.floor(value + 0.5)


@define
class PhaseSpec(BaseEntity):
    """Piecewise-uniform mapping intent: fraction_nodes[j] of the points reach physical_nodes[j]."""
    physical_nodes: tuple[float, ...] = field(default=(), converter=parse_float_tuple,
                                              validator=[_strictly_increasing, _positive])
    fraction_nodes: tuple[float, ...] = field(default=(), converter=parse_float_tuple,
                                              validator=[_strictly_increasing, _open_unit_interval])
    transition_fraction: float = field(default=0.3, converter=float, validator=[ge(0.0), lt(0.5)])

    def __attrs_post_init__(self):
        if len(self.physical_nodes) != len(self.fraction_nodes):
            raise ValueError(f"{len(self.physical_nodes)} physical nodes but "
                             f"{len(self.fraction_nodes)} fraction nodes")

    @property
    def phases(self) -> int:
        return len(self.fraction_nodes) + 1


@define
class SimConfig(BaseEntity):
    case: int = field(default=1, validator=in_((1, 2, 3, 4)))
    mode: Mode = field(default=Mode.Euler, converter=Mode)
    nu: float = field(default=0.0, converter=float, validator=ge(0.0))
    numerical_viscosity: bool = True
    n1: int = field(default=256, validator=ge(32))
    n2: int = field(default=256, validator=ge(32))
    t_end: float = field(default=0.0023, converter=float, validator=gt(0.0))
    max_steps: int = field(default=1_000_000_000, validator=ge(0))
    dt_cap: float = field(default=2.5e-7, converter=float, validator=gt(0.0))
    dt_min: float = field(default=1e-15, converter=float, validator=ge(0.0))
    psi_solves_per_step: int = field(default=2, validator=in_((1, 2)))
    transition_fraction: float = field(default=0.3, converter=float, validator=[ge(0.0), lt(0.5)])
    period1_z_threshold: float = field(default=0.25, converter=float, validator=[ge(0.0), lt(1.0)])
    period2_r_threshold: float = field(default=0.2, converter=float, validator=[ge(0.0), lt(1.0)])
    period3_r_threshold: float = field(default=0.2, converter=float, validator=[ge(0.0), lt(1.0)])
    period3_z_threshold: float = field(default=0.23, converter=float, validator=[ge(0.0), lt(1.0)])
    period2_start: int | None = field(default=None, validator=optional(ge(0)))
    period3_start: int | None = field(default=None, validator=optional(ge(0)))
    remesh_tolerance: float = field(default=0.05, converter=float, validator=ge(0.0))
    remesh_patience: int = field(default=20, validator=ge(1))
    diag_every: int = field(default=1, validator=ge(1))
    snapshot_every: int = field(default=500, validator=ge(0))
    checkpoint_every: int = field(default=5000, validator=ge(0))
    progress_every: int = field(default=1000, validator=ge(0))
    residual_check_every: int = field(default=100, validator=ge(1))
    snapshot_times: tuple[float, ...] = field(default=(), converter=parse_float_tuple,
                                              validator=_strictly_increasing)
    output_dir: str = "run"
    debug: bool = False
    verbose: bool = False

    def __attrs_post_init__(self):
        period2, period3 = self.period_starts
        if period3 < period2:
            raise ValueError(f"period 3 starts at step {period3}, before period 2 at step {period2}")

    @property
    def nu_effective(self) -> float:
        if self.mode is Mode.Euler:
            return 1.0 / self.n1 ** 2 if self.numerical_viscosity else 0.0
        return self.nu

    @property
    def period_starts(self) -> tuple[int, int]:
        scale = self.n1 / PERIOD_REFERENCE_N1
        period2 = _nearest(PERIOD2_REFERENCE_STEP * scale) if self.period2_start is None else self.period2_start
        period3 = _nearest(PERIOD3_REFERENCE_STEP * scale) if self.period3_start is None else self.period3_start
        return period2, period3

    def period_at(self, step: int) -> int:
        period2, period3 = self.period_starts
        if step < period2:
            return 1
        return 2 if step < period3 else 3


@define
class StepRecord(BaseEntity):
    t: float
    dt: float
    k1: float
    k2: float
    step: int = 0
    period: int = 1
    remeshed: bool = False


@define
class DiagnosticsRecord(BaseEntity):
    t: float
    dt: float
    u1_max: float
    w1_max: float
    w_max: float
    psi1_max: float
    psi1z_max: float
    u_max: float
    energy: float
    R: float
    Z: float
    R_over_Z: float
    alignment: float
    bkm: float
    R_grid: float
    Z_grid: float
    step: int

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(a.name for a in attrs.fields(cls))


@define
class FitResult(BaseEntity):
    quantity: str
    transform: Transform
    slope: float
    intercept: float
    T_est: float
    r_square: float
    window: tuple[float, float]
    samples: int
    exponent: float | None = None

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return ("quantity", "transform", "exponent", "t1", "t2", "samples", "slope", "intercept", "T_est",
                "r_square")

    def row(self) -> tuple:
        return (self.quantity, self.transform.value, "" if self.exponent is None else self.exponent,
                self.window[0], self.window[1], self.samples, self.slope, self.intercept, self.T_est,
                self.r_square)


@define
class SnapshotHeader(BaseEntity):
    n1: int
    n2: int
    t: float
    step: int
    case: int
    r_spec: PhaseSpec
    z_spec: PhaseSpec


@define
class CheckpointHeader(BaseEntity):
    config: SimConfig
    step: int
    t: float
    bkm: float
    w_max: float
    r_spec: PhaseSpec
    z_spec: PhaseSpec
    dt: float = 0.0
    r_streak: int = 0
    z_streak: int = 0
    checksum: str = ""
    version: int = CHECKPOINT_VERSION


@define
class FailureRecord(BaseEntity):
    error: str
    message: str
    step: int
    t: float
    checkpoint: str | None = None


@define
class RunManifest(BaseEntity):
    command: str
    version: str
    started: str
    finished: str = ""
    termination: str = TerminationReason.Completed.value
    steps: int = 0
    config: SimConfig | None = None
    files: dict[str, str] = field(factory=dict)
    notes: list[str] = field(factory=list)

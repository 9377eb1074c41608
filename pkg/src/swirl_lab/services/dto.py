#!/usr/bin/env python3
from __future__ import annotations

import hashlib
from typing import Any, Callable

import numpy as np
from attrs import define, evolve, field

from ..common.entity import BaseEntity
from ..common.stencils import Parity, smoothstep, smoothstep_derivative, smoothstep_integral
from ..common.utils import DomainError
from ..repository.dao import DiagnosticsRecord, FailureRecord, Mode, PhaseSpec, SnapshotHeader, StepRecord, \
    TerminationReason

__all__ = [
    "BurgersProblem",
    "CrossSections",
    "ErrorRow",
    "ErrorTable",
    "FieldState",
    "FullDomainFields",
    "GrowthRecord",
    "MaximumLocation",
    "MEReport",
    "MeshMap",
    "MeshPair",
    "Parity",
    "PeakIndices",
    "PoissonSystem",
    "RemeshResult",
    "RescaledProfile",
    "RunResult",
    "Snapshot",
    "Streamline",
    "Tendencies",
    "VelocityGrids",
    "VorticityVector"
]

INVERSE_TOLERANCE = 1e-13
INVERSE_MAX_ITERATIONS = 200


@define(eq=False)
class MeshMap(BaseEntity):
    """Monotone map x(rho) from [0, 1] onto [0, domain_length] with a piecewise-smooth density."""
    spec: PhaseSpec
    n: int
    domain_length: float
    levels: np.ndarray
    half_widths: np.ndarray
    coordinates: np.ndarray
    values: np.ndarray
    density: np.ndarray
    density_derivative: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def fractions(self) -> np.ndarray:
        return np.asarray(self.spec.fraction_nodes, dtype=float)

    def _ramps(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rho = np.asarray(rho, dtype=float)[..., None]
        s = self.fractions
        w = self.half_widths
        smooth = w > 0.0
        safe_w = np.where(smooth, w, 1.0)
        u = (rho - s + safe_w) / (2.0 * safe_w)
        step = np.where(rho >= s, 1.0, 0.0)
        heaviside = np.where(smooth, smoothstep(u), step)
        integral = np.where(smooth, 2.0 * safe_w * smoothstep_integral(u), np.maximum(rho - s, 0.0))
        slope = np.where(smooth, smoothstep_derivative(u) / (2.0 * safe_w), 0.0)
        return heaviside, integral, slope

    def evaluate(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        _, integral, _ = self._ramps(rho)
        return self.levels[0] * rho + integral @ np.diff(self.levels)

    def evaluate_density(self, rho: np.ndarray) -> np.ndarray:
        heaviside, _, _ = self._ramps(np.abs(rho))
        return self.levels[0] + heaviside @ np.diff(self.levels)

    def evaluate_density_derivative(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        _, _, slope = self._ramps(np.abs(rho))
        return np.sign(rho) * (slope @ np.diff(self.levels))

    def inverse(self, x: np.ndarray) -> np.ndarray:
        """Solve x(rho) = x by bracketed Newton iteration seeded from the sampled map."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > self.domain_length) or not np.all(np.isfinite(x)):
            raise DomainError(f"points outside [0, {self.domain_length}] cannot be inverted")
        index = np.clip(np.searchsorted(self.values, x, side="right") - 1, 0, self.n - 1)
        lo = self.coordinates[index].copy()
        hi = self.coordinates[index + 1].copy()
        rho = np.interp(x, self.values, self.coordinates)
        for _ in range(INVERSE_MAX_ITERATIONS):
            residual = self.evaluate(rho) - x
            lo = np.where(residual <= 0.0, rho, lo)
            hi = np.where(residual >= 0.0, rho, hi)
            step = residual / self.evaluate_density(rho)
            candidate = rho - step
            inside = (candidate >= lo) & (candidate <= hi)
            rho_next = np.where(inside, candidate, 0.5 * (lo + hi))
            if np.all(np.abs(rho_next - rho) <= INVERSE_TOLERANCE):
                rho = rho_next
                break
            rho = rho_next
        return np.clip(rho, 0.0, 1.0)

    def fingerprint(self) -> str:
        return hashlib.sha256(repr((self.spec, self.n, self.domain_length)).encode()).hexdigest()


@define(eq=False)
class MeshPair(BaseEntity):
    r: MeshMap
    z: MeshMap

    @property
    def n1(self) -> int:
        return self.z.n

    @property
    def n2(self) -> int:
        return self.r.n

    def fingerprint(self) -> str:
        return hashlib.sha256((self.r.fingerprint() + self.z.fingerprint()).encode()).hexdigest()

    def same_as(self, other: MeshPair) -> bool:
        return self.fingerprint() == other.fingerprint()

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r.values, self.z.values, indexing="ij")


@define(eq=False)
class FieldState(BaseEntity):
    """u1, omega1 and psi1 sampled on the (n2 + 1) x (n1 + 1) grid, rows along r."""
    u1: np.ndarray
    omega1: np.ndarray
    psi1: np.ndarray
    t: float = 0.0
    step: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.u1.shape

    def copy(self, **changes) -> FieldState:
        return evolve(self, u1=self.u1.copy(), omega1=self.omega1.copy(), psi1=self.psi1.copy(), **changes)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u1).all() and np.isfinite(self.omega1).all() and np.isfinite(self.psi1).all())


@define(eq=False)
class VelocityGrids(BaseEntity):
    ur: np.ndarray
    uz: np.ndarray
    utheta: np.ndarray
    psi1r: np.ndarray
    psi1z: np.ndarray
    u1r: np.ndarray
    u1z: np.ndarray


@define(eq=False)
class Tendencies(BaseEntity):
    du1_dt: np.ndarray
    domega1_dt: np.ndarray


@define(eq=False)
class VorticityVector(BaseEntity):
    omega_r: np.ndarray
    omega_theta: np.ndarray
    omega_z: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.omega_r ** 2 + self.omega_theta ** 2 + self.omega_z ** 2)


@define(eq=False)
class PoissonSystem(BaseEntity):
    """Diagonally equilibrated operator over the unknowns i < n2, 0 < j < n1."""
    matrix: Any
    row_scale: np.ndarray
    fingerprint: str
    n1: int
    n2: int
    wall_factor: float
    factor: Any = None
    preconditioner: Any = None

    @property
    def method(self) -> str:
        return "direct" if self.factor is not None else "iterative"


@define(eq=False)
class MEReport(BaseEntity):
    me_rho: np.ndarray
    me_eta: np.ndarray

    @property
    def mem_rho(self) -> float:
        return float(np.max(np.abs(self.me_rho)))

    @property
    def mem_eta(self) -> float:
        return float(np.max(np.abs(self.me_eta)))


@define
class PeakIndices(BaseEntity):
    J: int
    J_r: int
    I_w: int
    I_wz: int
    u1_row: int
    w1_column: int


@define
class RemeshResult(BaseEntity):
    r_spec: PhaseSpec | None = None
    z_spec: PhaseSpec | None = None


@define
class MaximumLocation(BaseEntity):
    value: float
    R: float
    Z: float
    R_grid: float
    Z_grid: float
    i: int
    j: int


@define(eq=False)
class CrossSections(BaseEntity):
    R: float
    Z: float
    r: np.ndarray
    z: np.ndarray
    u1_along_r: np.ndarray
    u1_along_z: np.ndarray
    psi1z_along_r: np.ndarray
    psi1z_along_z: np.ndarray


@define(eq=False)
class Streamline(BaseEntity):
    """Rows of (s, x, y, z, r) along the trace."""
    seed: tuple[float, float, float]
    ds: float
    points: np.ndarray
    truncated: bool = False
    exited: bool = False


@define(eq=False)
class RescaledProfile(BaseEntity):
    xi: np.ndarray
    zeta: np.ndarray
    values: np.ndarray
    R: float
    Z: float
    norm: float
    clipped_fraction: float
    t: float = 0.0


@define
class ErrorRow(BaseEntity):
    variable: str
    norm: str
    n: int
    error: float
    order: float | None = None


@define
class ErrorTable(BaseEntity):
    rows: list[ErrorRow] = field(factory=list)

    def for_variable(self, variable: str, norm: str | None = None) -> list[ErrorRow]:
        return [r for r in self.rows if r.variable == variable and (norm is None or r.norm == norm)]


@define(eq=False)
class FullDomainFields(BaseEntity):
    r: np.ndarray
    z: np.ndarray
    u1: np.ndarray
    omega1: np.ndarray
    psi1: np.ndarray


def _default_u0(x: np.ndarray) -> np.ndarray:
    return -x / (1.0 + x ** 2)


def _default_u0_prime(x: np.ndarray) -> np.ndarray:
    return -(1.0 - x ** 2) / (1.0 + x ** 2) ** 2


@define
class BurgersProblem(BaseEntity):
    """Inviscid Burgers data u0 + v0 where v0 is a compact bump of width eps."""
    eps: float = field(default=0.0, converter=float)
    p: float = field(default=2.0, converter=float)
    u0: Callable[[np.ndarray], np.ndarray] = _default_u0
    u0_prime: Callable[[np.ndarray], np.ndarray] = _default_u0_prime
    u0_bound: float = 0.5
    domain: tuple[float, float] = (-0.5, 0.5)

    def bump(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.eps <= 0.0:
            return np.zeros_like(x)
        s = x / self.eps
        inside = np.abs(s) < 1.0
        return np.where(inside, self.eps ** 4 * np.sin(np.pi * s) * (1.0 - s ** 2) ** 3, 0.0)

    def bump_prime(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.eps <= 0.0:
            return np.zeros_like(x)
        s = x / self.eps
        inside = np.abs(s) < 1.0
        value = self.eps ** 3 * (np.pi * np.cos(np.pi * s) * (1.0 - s ** 2) ** 3
                                 - 6.0 * s * np.sin(np.pi * s) * (1.0 - s ** 2) ** 2)
        return np.where(inside, value, 0.0)

    def initial(self, x: np.ndarray) -> np.ndarray:
        return self.u0(x) + self.bump(x)

    def initial_prime(self, x: np.ndarray) -> np.ndarray:
        return self.u0_prime(x) + self.bump_prime(x)


@define(eq=False)
class RunResult(BaseEntity):
    termination: TerminationReason
    state: FieldState
    maps: MeshPair
    steps: int
    records: list[DiagnosticsRecord] = field(factory=list)
    remeshes: list[StepRecord] = field(factory=list)
    failure: FailureRecord | None = None
    mode: Mode = Mode.Euler


@define(eq=False)
class Snapshot(BaseEntity):
    header: SnapshotHeader
    state: FieldState
    maps: MeshPair
    path: str = ""


@define
class GrowthRecord(BaseEntity):
    t: float
    eps: float
    p: float
    ratio: float
    bound: float
    exponent: float

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return "t", "eps", "p", "ratio", "bound", "exponent"

    def row(self) -> tuple[float, ...]:
        return self.t, self.eps, self.p, self.ratio, self.bound, self.exponent

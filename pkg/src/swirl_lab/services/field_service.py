#!/usr/bin/env python3
from __future__ import annotations

import numpy as np

from .dto import FieldState, FullDomainFields, MeshPair, Parity
from .poisson_service import PoissonService
from ..common.singleton import Singleton
from ..common.stencils import interpolation_matrix, pad, sample_padded
from ..common.utils import DomainError

__all__ = [
    "FieldSampler",
    "FieldService",
    "initial_u1"
]

AMPLITUDE = 12000.0


def initial_u1(case: int, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Closed-form initial u1 for the four swirl cases."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    envelope = 1.0 - r ** 2
    damping = 1.0 + 12.5 * np.sin(np.pi * z) ** 2
    if case == 4:
        return AMPLITUDE * envelope ** 18 * np.sin(4.0 * np.pi * z) / damping
    base = AMPLITUDE * envelope ** 18 * np.sin(2.0 * np.pi * z) / damping
    if case == 1:
        return base
    if case == 2:
        return base + envelope ** 10 * np.sin(6.0 * np.pi * z) / damping
    if case == 3:
        return base + 42.0 * envelope ** 6 * np.sin(10.0 * np.pi * z) / damping
    raise DomainError(f"unknown case {case}")


class FieldSampler:
    """Cubic interpolation of one grid field at arbitrary (r, z), honoring its parities."""

    def __init__(self, grid: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
                 z_parity: Parity = Parity.Odd):
        self.maps = maps
        self.padded = pad(grid, r_parity, z_parity)
        self.r_parity = r_parity
        self.z_parity = z_parity

    def _fold(self, r: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        z = z - np.floor(z + 0.5)
        sign = np.ones(np.broadcast_shapes(r.shape, z.shape))
        if self.r_parity is Parity.Odd:
            sign = np.where(r < 0.0, -sign, sign)
        if self.z_parity is Parity.Odd:
            sign = np.where(z < 0.0, -sign, sign)
        r = np.clip(np.abs(r), 0.0, self.maps.r.domain_length)
        z = np.clip(np.abs(z), 0.0, self.maps.z.domain_length)
        return r, z, sign

    def __call__(self, r: np.ndarray, z: np.ndarray) -> np.ndarray:
        r, z, sign = self._fold(r, z)
        r, z = np.broadcast_arrays(r, z)
        rho = self.maps.r.inverse(r) * self.maps.n2
        eta = self.maps.z.inverse(z) * self.maps.n1
        return sign * sample_padded(self.padded, rho, eta, self.maps.n2, self.maps.n1)

    def grid(self, r: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Tensor-product samples on the lines r x z."""
        r_folded, _, r_sign = self._fold(np.asarray(r, dtype=float), np.zeros(np.shape(r)))
        _, z_folded, z_sign = self._fold(np.zeros(np.shape(z)), np.asarray(z, dtype=float))
        wr = interpolation_matrix(self.maps.r.inverse(r_folded) * self.maps.n2, self.maps.n2)
        wz = interpolation_matrix(self.maps.z.inverse(z_folded) * self.maps.n1, self.maps.n1)
        return r_sign[:, None] * (wr @ self.padded @ wz.T) * z_sign[None, :]


class FieldService(metaclass=Singleton):
    def __init__(self):
        self.poisson_service: PoissonService = PoissonService()

    def init_case(self, case: int, maps: MeshPair) -> FieldState:
        r, z = maps.meshgrid()
        u1 = initial_u1(case, r, z)
        omega1 = np.zeros_like(u1)
        system = self.poisson_service.assemble(maps)
        psi1 = self.poisson_service.solve(system, omega1)
        return self.enforce_symmetry(FieldState(u1, omega1, psi1))

    @staticmethod
    def enforce_symmetry(state: FieldState) -> FieldState:
        for v in (state.u1, state.omega1, state.psi1):
            v[:, 0] = 0.0
            v[:, -1] = 0.0
        state.psi1[-1, :] = 0.0
        return state

    @staticmethod
    def with_ghosts(v: np.ndarray, r_parity: Parity = Parity.Even, z_parity: Parity = Parity.Odd) -> np.ndarray:
        return pad(v, r_parity, z_parity)

    @staticmethod
    def extend_full_domain(state: FieldState, maps: MeshPair) -> FullDomainFields:
        def extend(v: np.ndarray) -> np.ndarray:
            v = np.concatenate([v[:0:-1], v], axis=0)
            return np.concatenate([-v[:, :0:-1], v], axis=1)

        r = np.concatenate([-maps.r.values[:0:-1], maps.r.values])
        z = np.concatenate([-maps.z.values[:0:-1], maps.z.values])
        return FullDomainFields(r, z, extend(state.u1), extend(state.omega1), extend(state.psi1))

    @staticmethod
    def blend(before: FieldState, after: FieldState, t: float) -> FieldState:
        """Linear interpolation in time between two states on the same maps."""
        span = after.t - before.t
        w = 0.0 if span == 0.0 else (t - before.t) / span
        return FieldState((1.0 - w) * before.u1 + w * after.u1,
                          (1.0 - w) * before.omega1 + w * after.omega1,
                          (1.0 - w) * before.psi1 + w * after.psi1,
                          t, after.step)

    @staticmethod
    def sampler(grid: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
                z_parity: Parity = Parity.Odd) -> FieldSampler:
        return FieldSampler(grid, maps, r_parity, z_parity)

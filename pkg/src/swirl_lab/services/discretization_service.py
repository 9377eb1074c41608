#!/usr/bin/env python3
from __future__ import annotations

import numpy as np
from attrs import define

from .dto import FieldState, MeshPair, Parity, Tendencies, VelocityGrids, VorticityVector
from ..common.singleton import Singleton
from ..common.stencils import GHOST, pad

__all__ = [
    "DiscretizationService"
]


@define
class _Differences:
    v_rho: np.ndarray
    v_rhorho: np.ndarray
    v_eta: np.ndarray
    v_etaeta: np.ndarray


class DiscretizationService(metaclass=Singleton):
    """Centered second-order differences on the mapped grid, chained through the map densities."""

    @staticmethod
    def _differences(v: np.ndarray, maps: MeshPair, r_parity: Parity, z_parity: Parity) -> _Differences:
        g = GHOST
        rows, cols = v.shape
        p = pad(v, r_parity, z_parity)
        center = p[g:g + rows, g:g + cols]
        north = p[g + 1:g + 1 + rows, g:g + cols]
        south = p[g - 1:g - 1 + rows, g:g + cols]
        east = p[g:g + rows, g + 1:g + 1 + cols]
        west = p[g:g + rows, g - 1:g - 1 + cols]
        hr = maps.r.h
        hz = maps.z.h
        return _Differences((north - south) / (2.0 * hr), (north - 2.0 * center + south) / hr ** 2,
                            (east - west) / (2.0 * hz), (east - 2.0 * center + west) / hz ** 2)

    def d_drho(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
               z_parity: Parity = Parity.Odd) -> np.ndarray:
        return self._differences(v, maps, r_parity, z_parity).v_rho

    def d_deta(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
               z_parity: Parity = Parity.Odd) -> np.ndarray:
        return self._differences(v, maps, r_parity, z_parity).v_eta

    def d_dr(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
             z_parity: Parity = Parity.Odd) -> np.ndarray:
        return self.d_drho(v, maps, r_parity, z_parity) / maps.r.density[:, None]

    def d_dz(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
             z_parity: Parity = Parity.Odd) -> np.ndarray:
        return self.d_deta(v, maps, r_parity, z_parity) / maps.z.density[None, :]

    def d2_dr2(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
               z_parity: Parity = Parity.Odd) -> np.ndarray:
        d = self._differences(v, maps, r_parity, z_parity)
        return self._second(d.v_rho, d.v_rhorho, maps.r.density[:, None], maps.r.density_derivative[:, None])

    def d2_dz2(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
               z_parity: Parity = Parity.Odd) -> np.ndarray:
        d = self._differences(v, maps, r_parity, z_parity)
        return self._second(d.v_eta, d.v_etaeta, maps.z.density[None, :], maps.z.density_derivative[None, :])

    @staticmethod
    def _second(first: np.ndarray, second: np.ndarray, density: np.ndarray,
                density_derivative: np.ndarray) -> np.ndarray:
        return (second - first * density_derivative / density) / density ** 2

    def laplacian(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
                  z_parity: Parity = Parity.Odd) -> np.ndarray:
        """v_rr + (3/r) v_r + v_zz with the axis limit 4 v_rr at r = 0."""
        d = self._differences(v, maps, r_parity, z_parity)
        r_density = maps.r.density[:, None]
        v_r = d.v_rho / r_density
        v_rr = self._second(d.v_rho, d.v_rhorho, r_density, maps.r.density_derivative[:, None])
        v_zz = self._second(d.v_eta, d.v_etaeta, maps.z.density[None, :], maps.z.density_derivative[None, :])
        radial = v_rr.copy()
        radial[1:] += 3.0 * v_r[1:] / maps.r.values[1:, None]
        radial[0] += 3.0 * v_rr[0]
        return radial + v_zz

    def velocity_from_psi(self, psi1: np.ndarray, u1: np.ndarray, maps: MeshPair) -> VelocityGrids:
        r = maps.r.values[:, None]
        psi1r = self.d_dr(psi1, maps)
        psi1z = self.d_dz(psi1, maps)
        u1r = self.d_dr(u1, maps)
        u1z = self.d_dz(u1, maps)
        return VelocityGrids(ur=-r * psi1z, uz=2.0 * psi1 + r * psi1r, utheta=r * u1, psi1r=psi1r, psi1z=psi1z,
                             u1r=u1r, u1z=u1z)

    def vorticity_vector(self, u1: np.ndarray, omega1: np.ndarray, maps: MeshPair,
                         r_parity: Parity = Parity.Even, z_parity: Parity = Parity.Odd) -> VorticityVector:
        r = maps.r.values[:, None]
        u1r = self.d_dr(u1, maps, r_parity, z_parity)
        u1z = self.d_dz(u1, maps, r_parity, z_parity)
        return VorticityVector(omega_r=-r * u1z, omega_theta=r * omega1, omega_z=2.0 * u1 + r * u1r)

    def rhs(self, state: FieldState, velocity: VelocityGrids, maps: MeshPair, nu: float) -> Tendencies:
        omega1r = self.d_dr(state.omega1, maps)
        omega1z = self.d_dz(state.omega1, maps)
        du1 = -velocity.ur * velocity.u1r - velocity.uz * velocity.u1z + 2.0 * state.u1 * velocity.psi1z
        domega1 = -velocity.ur * omega1r - velocity.uz * omega1z + 2.0 * state.u1 * velocity.u1z
        if nu > 0.0:
            du1 += nu * self.laplacian(state.u1, maps)
            domega1 += nu * self.laplacian(state.omega1, maps)
        for v in (du1, domega1):
            v[:, 0] = 0.0
            v[:, -1] = 0.0
            v[-1, :] = 0.0
        return Tendencies(du1, domega1)

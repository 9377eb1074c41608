#!/usr/bin/env python3
from __future__ import annotations

from typing import Callable

import numpy as np

from .discretization_service import DiscretizationService
from .dto import CrossSections, FieldState, MaximumLocation, MeshPair, Parity, Streamline, VelocityGrids
from .field_service import FieldSampler, FieldService
from ..common.singleton import Singleton
from ..common.stencils import pad, soft_cutoff
from ..common.utils import DomainError
from ..repository.dao import DiagnosticsRecord

__all__ = [
    "DiagnosticsService",
    "VelocitySampler"
]

VelocitySampler = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


class DiagnosticsService(metaclass=Singleton):
    def __init__(self):
        self.discretization_service: DiscretizationService = DiscretizationService()
        self.field_service: FieldService = FieldService()

    def record(self, state: FieldState, maps: MeshPair, velocity: VelocityGrids, bkm: float,
               dt: float) -> DiagnosticsRecord:
        vorticity = self.discretization_service.vorticity_vector(state.u1, state.omega1, maps)
        speed = np.sqrt(velocity.ur ** 2 + velocity.utheta ** 2 + velocity.uz ** 2)
        peak = self.track_maximum(state.u1, maps)
        alignment = self.alignment(state, maps, velocity, peak.R, peak.Z)
        return DiagnosticsRecord(
            t=state.t,
            dt=dt,
            u1_max=float(np.max(np.abs(state.u1))),
            w1_max=float(np.max(np.abs(state.omega1))),
            w_max=float(np.max(vorticity.magnitude)),
            psi1_max=float(np.max(np.abs(state.psi1))),
            psi1z_max=float(np.max(np.abs(velocity.psi1z))),
            u_max=float(np.max(speed)),
            energy=self.kinetic_energy(velocity, maps),
            R=peak.R,
            Z=peak.Z,
            R_over_Z=peak.R / peak.Z if peak.Z > 0.0 else float("nan"),
            alignment=alignment,
            bkm=bkm,
            R_grid=peak.R_grid,
            Z_grid=peak.Z_grid,
            step=state.step
        )

    def alignment(self, state: FieldState, maps: MeshPair, velocity: VelocityGrids, r: float, z: float) -> float:
        u1 = float(self.field_service.sampler(state.u1, maps)(r, z))
        psi1z = float(self.field_service.sampler(velocity.psi1z, maps, Parity.Even, Parity.Even)(r, z))
        return psi1z / u1 if u1 != 0.0 else float("nan")

    def vorticity_max(self, state: FieldState, maps: MeshPair) -> float:
        return float(np.max(self.discretization_service.vorticity_vector(state.u1, state.omega1, maps).magnitude))

    @staticmethod
    def track_maximum(field: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
                      z_parity: Parity = Parity.Odd) -> MaximumLocation:
        """Grid argmax refined by a least-squares quadratic over the 3x3 neighborhood."""
        i, j = (int(k) for k in np.unravel_index(np.argmax(field), field.shape))
        r = maps.r.values
        z = maps.z.values
        r_ext = np.concatenate([[-r[1]], r, [2.0 * r[-1] - r[-2]]])
        z_ext = np.concatenate([[-z[1]], z, [2.0 * z[-1] - z[-2]]])
        padded = pad(field, r_parity, z_parity)
        g = 2
        window = padded[g + i - 1:g + i + 2, g + j - 1:g + j + 2]
        dr, dz = np.meshgrid(r_ext[i:i + 3] - r[i], z_ext[j:j + 3] - z[j], indexing="ij")
        dr = dr.ravel()
        dz = dz.ravel()
        design = np.column_stack([np.ones(9), dr, dz, dr ** 2, dr * dz, dz ** 2])
        coefficients, *_ = np.linalg.lstsq(design, window.ravel(), rcond=None)
        _, b, c, d, e, f = coefficients
        hessian = np.array([[2.0 * d, e], [e, 2.0 * f]])
        R, Z = r[i], z[j]
        if np.linalg.det(hessian) > 0.0 and hessian[0, 0] < 0.0:
            shift = np.linalg.solve(hessian, -np.array([b, c]))
            R = float(np.clip(r[i] + shift[0], r_ext[i], r_ext[i + 2]))
            Z = float(np.clip(z[j] + shift[1], z_ext[j], z_ext[j + 2]))
            R = float(np.clip(R, 0.0, maps.r.domain_length))
            Z = float(np.clip(Z, 0.0, maps.z.domain_length))
        return MaximumLocation(value=float(field[i, j]), R=float(R), Z=float(Z), R_grid=float(r[i]),
                               Z_grid=float(z[j]), i=i, j=j)

    @staticmethod
    def kinetic_energy(velocity: VelocityGrids, maps: MeshPair) -> float:
        wr = maps.r.values * maps.r.density * maps.r.h
        wz = maps.z.density * maps.z.h
        wr[[0, -1]] *= 0.5
        wz[[0, -1]] *= 0.5
        speed2 = velocity.ur ** 2 + velocity.utheta ** 2 + velocity.uz ** 2
        return float(0.5 * wr @ speed2 @ wz)

    @staticmethod
    def bkm_accumulate(bkm: float, t_prev: float, w_prev: float, t: float, w: float) -> float:
        if t < t_prev:
            raise DomainError(f"time went backwards from {t_prev!r} to {t!r}")
        return bkm + 0.5 * (t - t_prev) * (w_prev + w)

    def cross_sections(self, state: FieldState, maps: MeshPair, R: float, Z: float) -> CrossSections:
        psi1z = self.discretization_service.d_dz(state.psi1, maps)
        u1 = self.field_service.sampler(state.u1, maps)
        psi = self.field_service.sampler(psi1z, maps, Parity.Even, Parity.Even)
        r = maps.r.values
        z = maps.z.values
        return CrossSections(R=R, Z=Z, r=r.copy(), z=z.copy(),
                             u1_along_r=u1.grid(r, np.array([Z]))[:, 0],
                             u1_along_z=u1.grid(np.array([R]), z)[0],
                             psi1z_along_r=psi.grid(r, np.array([Z]))[:, 0],
                             psi1z_along_z=psi.grid(np.array([R]), z)[0])

    def spectrum_z(self, field: np.ndarray, maps: MeshPair, R: float, cutoff: bool = True,
                   r_parity: Parity = Parity.Even, z_parity: Parity = Parity.Odd) -> np.ndarray:
        """Fourier magnitudes over eta of the section at r = R, normalized to a unit peak."""
        section = self.field_service.sampler(field, maps, r_parity, z_parity).grid(np.array([R]), maps.z.values)[0]
        samples = section[:-1]
        peak = float(np.max(np.abs(samples)))
        if peak > 0.0:
            samples = samples / peak
        if cutoff:
            samples = samples * soft_cutoff(maps.z.coordinates[:-1])
        return np.abs(np.fft.rfft(samples)) / samples.size

    def velocity_sampler(self, velocity: VelocityGrids, maps: MeshPair) -> VelocitySampler:
        ur = self.field_service.sampler(velocity.ur, maps, Parity.Odd, Parity.Even)
        utheta = self.field_service.sampler(velocity.utheta, maps, Parity.Odd, Parity.Odd)
        uz = self.field_service.sampler(velocity.uz, maps, Parity.Even, Parity.Odd)

        def sample(r: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            return ur(r, z), utheta(r, z), uz(r, z)

        return sample

    @staticmethod
    def trace_streamline(sampler: VelocitySampler, seed: tuple[float, float, float], ds: float,
                         max_steps: int) -> Streamline:
        """Classical RK4 in Cartesian coordinates from (r0, z0, theta0), theta0 in turns."""
        r0, z0, theta0 = seed

        def velocity(p: np.ndarray) -> np.ndarray:
            x, y, z = p
            r = np.hypot(x, y)
            phi = np.arctan2(y, x)
            ur, ut, uz = (float(np.asarray(v)) for v in sampler(np.array(r), np.array(z)))
            return np.array([ur * np.cos(phi) - ut * np.sin(phi), ur * np.sin(phi) + ut * np.cos(phi), uz])

        position = np.array([r0 * np.cos(2.0 * np.pi * theta0), r0 * np.sin(2.0 * np.pi * theta0), z0])
        points = [(0.0, *position, float(np.hypot(position[0], position[1])))]
        truncated = exited = False
        for k in range(1, max_steps + 1):
            k1 = velocity(position)
            k2 = velocity(position + 0.5 * ds * k1)
            k3 = velocity(position + 0.5 * ds * k2)
            k4 = velocity(position + ds * k3)
            candidate = position + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(candidate)):
                truncated = True
                break
            radius = float(np.hypot(candidate[0], candidate[1]))
            if radius > 1.0:
                exited = True
                break
            position = candidate
            points.append((k * ds, *position, radius))
        return Streamline(seed=(float(r0), float(z0), float(theta0)), ds=ds, points=np.array(points),
                          truncated=truncated, exited=exited)

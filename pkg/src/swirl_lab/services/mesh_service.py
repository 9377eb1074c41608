#!/usr/bin/env python3
from __future__ import annotations

import numpy as np
from attrs import define

from .discretization_service import DiscretizationService
from .dto import FieldState, MEReport, MeshMap, MeshPair, Parity, PeakIndices, RemeshResult
from .field_service import FieldService
from ..common.singleton import Singleton
from ..common.stencils import interpolation_matrix, pad
from ..common.utils import DegeneratePeakError, DomainError, MeshConstructionError
from ..repository.dao import PhaseSpec, SimConfig

__all__ = [
    "MeshService",
    "PERIOD1_R_SPEC",
    "PERIOD1_Z_SPEC",
    "PERIOD2_R_RULE",
    "PERIOD3_R_RULE",
    "PERIOD3_Z_RULE",
    "RemeshRule",
    "R_LENGTH",
    "Z_LENGTH"
]

R_LENGTH = 1.0
Z_LENGTH = 0.5

PERIOD1_R_SPEC = PhaseSpec((0.001, 0.05, 0.2), (0.001, 0.5, 0.85))
PERIOD1_Z_SPEC = PhaseSpec((0.1, 0.25), (0.5, 0.85))
PERIOD1_Z_FACTORS = (2.0, 10.0)
PERIOD1_Z_FRACTIONS = (0.6, 0.9)


@define(frozen=True)
class RemeshRule:
    """Three-node rule built around a peak location and the location of its steepest slope."""
    fractions: tuple[float, float, float]
    peak_offset: float
    slope_offset: float
    outer_factor: float

    def apply(self, x_peak: float, x_slope: float, spacing: float, transition_fraction: float) -> PhaseSpec:
        if not spacing > 0.0:
            raise DegeneratePeakError(f"peak and slope locations coincide (spacing={spacing})")
        s1, s2, s3 = self.fractions
        x2 = x_peak + self.peak_offset * spacing
        x1 = max(s1 / s2 * x2, x_slope - self.slope_offset * spacing)
        x3 = max(self.outer_factor * x_peak, (x2 - x1) * (s3 - s2) / (s2 - s1) + x2)
        return PhaseSpec((x1, x2, x3), self.fractions, transition_fraction)


PERIOD2_R_RULE = RemeshRule((0.05, 0.6, 0.9), 2.0, 5.0, 3.0)
PERIOD3_R_RULE = RemeshRule((0.05, 0.65, 0.9), 10.0, 3.0, 2.3)
PERIOD3_Z_RULE = RemeshRule((0.05, 0.65, 0.9), 2.0, 16.0, 2.3)


class MeshService(metaclass=Singleton):
    def __init__(self):
        self.discretization_service: DiscretizationService = DiscretizationService()
        self.field_service: FieldService = FieldService()

    @staticmethod
    def build_map(spec: PhaseSpec, n: int, domain_length: float) -> MeshMap:
        if n < 4:
            raise MeshConstructionError(f"at least 4 intervals are required, got {n}")
        nodes = np.asarray(spec.physical_nodes, dtype=float)
        fractions = np.asarray(spec.fraction_nodes, dtype=float)
        for k, x in enumerate(nodes):
            if not 0.0 < x < domain_length:
                raise MeshConstructionError(f"node {k} at {x!r} lies outside (0, {domain_length})", phase=k)

        bounds = np.concatenate([[0.0], fractions, [1.0]])
        widths = np.diff(bounds)
        half_widths = spec.transition_fraction * np.minimum(widths[:-1], widths[1:])
        provisional = MeshMap(spec, n, domain_length, np.ones(fractions.size + 1), half_widths,
                              np.empty(0), np.empty(0), np.empty(0), np.empty(0))

        # phase k contributes x(p) = sum_k d_k Phi_k(p) at p = s_1..s_m, 1
        points = np.concatenate([fractions, [1.0]])
        _, integral, _ = provisional._ramps(points)
        basis = np.empty((points.size, fractions.size + 1))
        basis[:, 0] = points - (integral[:, 0] if fractions.size else 0.0)
        for k in range(1, fractions.size):
            basis[:, k] = integral[:, k - 1] - integral[:, k]
        if fractions.size:
            basis[:, -1] = integral[:, -1]
        targets = np.concatenate([nodes, [domain_length]])
        try:
            levels = np.linalg.solve(basis, targets)
        except np.linalg.LinAlgError as e:
            raise MeshConstructionError(f"density levels are not determined: {e}") from e
        for k, level in enumerate(levels):
            if not level > 0.0:
                raise MeshConstructionError(f"phase {k} needs a non-positive density level {level!r}", phase=k)

        mesh_map = provisional.copy(levels=levels)
        coordinates = np.arange(n + 1) / n
        values = mesh_map.evaluate(coordinates)
        values[0] = 0.0
        values[-1] = domain_length
        if np.any(np.diff(values) <= 0.0):
            raise MeshConstructionError("sampled map is not strictly increasing")
        return mesh_map.copy(coordinates=coordinates, values=values,
                             density=mesh_map.evaluate_density(coordinates),
                             density_derivative=mesh_map.evaluate_density_derivative(coordinates))

    def build_maps(self, r_spec: PhaseSpec, z_spec: PhaseSpec, n1: int, n2: int) -> MeshPair:
        return MeshPair(self.build_map(r_spec, n2, R_LENGTH), self.build_map(z_spec, n1, Z_LENGTH))

    def initial_maps(self, config: SimConfig) -> MeshPair:
        tf = config.transition_fraction
        return self.build_maps(PERIOD1_R_SPEC.copy(transition_fraction=tf),
                               PERIOD1_Z_SPEC.copy(transition_fraction=tf), config.n1, config.n2)

    @staticmethod
    def eval_map(mesh_map: MeshMap, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0.0) or np.any(rho > 1.0):
            raise DomainError("computational coordinates must lie in [0, 1]")
        return mesh_map.evaluate(rho), mesh_map.evaluate_density(rho)

    @staticmethod
    def inverse_map(mesh_map: MeshMap, x: np.ndarray) -> np.ndarray:
        return mesh_map.inverse(x)

    def mesh_effectiveness(self, v: np.ndarray, maps: MeshPair, r_parity: Parity = Parity.Even,
                           z_parity: Parity = Parity.Odd) -> MEReport:
        """Per-cell variation of v relative to its sup norm along each computational direction."""
        scale = float(np.max(np.abs(v)))
        if not scale > 0.0:
            raise DomainError("mesh effectiveness is undefined for an identically zero field")
        d = self.discretization_service
        me_rho = maps.r.h * d.d_drho(v, maps, r_parity, z_parity) / scale
        me_eta = maps.z.h * d.d_deta(v, maps, r_parity, z_parity) / scale
        return MEReport(me_rho, me_eta)

    def peak_indices(self, state: FieldState, maps: MeshPair) -> PeakIndices | None:
        if not (np.max(state.u1) > 0.0 and np.max(state.omega1) > 0.0):
            return None
        d = self.discretization_service
        i_u, j_u = np.unravel_index(np.argmax(state.u1), state.u1.shape)
        u1r = d.d_dr(state.u1, maps)
        j_r = int(np.argmax(u1r[:i_u + 1, j_u]))
        i_w, j_w = np.unravel_index(np.argmax(state.omega1), state.omega1.shape)
        w1z = d.d_dz(state.omega1, maps)
        i_wz = int(np.argmax(w1z[i_w, :j_w + 1]))
        return PeakIndices(J=int(i_u), J_r=j_r, I_w=int(j_w), I_wz=i_wz, u1_row=int(j_u), w1_column=int(i_w))

    def remesh_check(self, state: FieldState, maps: MeshPair, period: int,
                     config: SimConfig | None = None) -> RemeshResult | None:
        if config is None:
            config = SimConfig()
        peaks = self.peak_indices(state, maps)
        if peaks is None:
            return None

        tf = config.transition_fraction
        r = maps.r.values
        z = maps.z.values
        r_spec = z_spec = None
        if period == 1:
            if peaks.I_w < config.period1_z_threshold * maps.n1:
                z_spec = self._period1_z_spec(z[peaks.I_w], tf)
        elif period == 2:
            if peaks.J_r < config.period2_r_threshold * maps.n2:
                r_spec = PERIOD2_R_RULE.apply(r[peaks.J], r[peaks.J_r], r[peaks.J] - r[peaks.J_r], tf)
            if peaks.I_w < config.period1_z_threshold * maps.n1:
                z_spec = self._period1_z_spec(z[peaks.I_w], tf)
        else:
            if peaks.J_r < config.period3_r_threshold * maps.n2:
                r_spec = PERIOD3_R_RULE.apply(r[peaks.J], r[peaks.J_r], r[peaks.J] - r[peaks.J_r], tf)
            if peaks.I_wz < config.period3_z_threshold * maps.n1:
                z_spec = PERIOD3_Z_RULE.apply(z[peaks.I_w], z[peaks.I_wz], z[peaks.I_w] - z[peaks.I_wz], tf)

        if r_spec is None and z_spec is None:
            return None
        return RemeshResult(r_spec, z_spec)

    @staticmethod
    def _period1_z_spec(z_peak: float, transition_fraction: float) -> PhaseSpec:
        if not z_peak > 0.0:
            raise DegeneratePeakError("vorticity peak sits on the symmetry plane")
        nodes = tuple(f * z_peak for f in PERIOD1_Z_FACTORS)
        return PhaseSpec(nodes, PERIOD1_Z_FRACTIONS, transition_fraction)

    def interpolate_fields(self, state: FieldState, old_maps: MeshPair, new_maps: MeshPair) -> FieldState:
        if old_maps.same_as(new_maps):
            return state.copy()
        wr = interpolation_matrix(old_maps.r.inverse(new_maps.r.values) * old_maps.r.n, old_maps.r.n)
        wz = interpolation_matrix(old_maps.z.inverse(new_maps.z.values) * old_maps.z.n, old_maps.z.n)

        def transfer(v: np.ndarray) -> np.ndarray:
            return wr @ pad(v, Parity.Even, Parity.Odd) @ wz.T

        moved = FieldState(transfer(state.u1), transfer(state.omega1), transfer(state.psi1), state.t, state.step)
        return self.field_service.enforce_symmetry(moved)

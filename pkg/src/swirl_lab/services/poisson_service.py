#!/usr/bin/env python3
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, MatrixRankWarning, bicgstab, spilu, splu

from .dto import MeshMap, MeshPair, PoissonSystem
from ..common.singleton import Singleton
from ..common.utils import PoissonError

__all__ = [
    "DIRECT_LIMIT",
    "DIRECT_TOLERANCE",
    "ITERATIVE_TOLERANCE",
    "PoissonService"
]

DIRECT_LIMIT = 2_000_000
DIRECT_TOLERANCE = 1e-11
ITERATIVE_TOLERANCE = 1e-10
ITERATIVE_MAX_ITERATIONS = 5000
REFINEMENT_STEPS = 8
STALL_RATIO = 0.5


def _radial_operator(r_map: MeshMap) -> sp.csr_matrix:
    """d2/dr2 + (3/r) d/dr on nodes 0..n-1 with psi(1) = 0 eliminated and the axis limit at node 0."""
    n = r_map.n
    h = r_map.h
    density = r_map.density[:n]
    curvature = r_map.density_derivative[:n]
    r = r_map.values[:n]
    alpha = 1.0 / density ** 2
    beta = np.zeros(n)
    beta[1:] = -curvature[1:] / density[1:] ** 3 + 3.0 / (r[1:] * density[1:])
    lower = alpha / h ** 2 - beta / (2.0 * h)
    upper = alpha / h ** 2 + beta / (2.0 * h)
    diagonal = -2.0 * alpha / h ** 2
    # axis: 4 psi_rr with the even ghost psi(-h) = psi(h)
    diagonal[0] = -8.0 * alpha[0] / h ** 2
    upper[0] = 8.0 * alpha[0] / h ** 2
    return sp.diags([lower[1:], diagonal, upper[:-1]], [-1, 0, 1], format="csr")


def _axial_operator(z_map: MeshMap) -> sp.csr_matrix:
    """d2/dz2 on nodes 1..n-1 with psi = 0 eliminated at both ends."""
    n = z_map.n
    h = z_map.h
    density = z_map.density[1:n]
    curvature = z_map.density_derivative[1:n]
    gamma = 1.0 / density ** 2
    delta = -curvature / density ** 3
    lower = gamma / h ** 2 - delta / (2.0 * h)
    upper = gamma / h ** 2 + delta / (2.0 * h)
    diagonal = -2.0 * gamma / h ** 2
    return sp.diags([lower[1:], diagonal, upper[:-1]], [-1, 0, 1], format="csr")


class PoissonService(metaclass=Singleton):
    def __init__(self):
        self.direct_limit: int = DIRECT_LIMIT
        self.system: PoissonSystem | None = None

    def assemble(self, maps: MeshPair, direct: bool | None = None) -> PoissonSystem:
        fingerprint = maps.fingerprint()
        if direct is None:
            direct = maps.n2 * (maps.n1 - 1) <= self.direct_limit
        if self.system is not None and self.system.fingerprint == fingerprint \
                and (self.system.factor is not None) == direct:
            return self.system

        radial = _radial_operator(maps.r)
        axial = _axial_operator(maps.z)
        operator = -(sp.kron(radial, sp.identity(axial.shape[0])) + sp.kron(sp.identity(radial.shape[0]), axial))
        row_scale = 1.0 / np.abs(operator.diagonal())
        matrix = sp.csc_matrix(sp.diags(row_scale) @ operator)
        wall_factor = 2.0 / (maps.r.h * maps.r.density[-1]) ** 2

        factor = preconditioner = None
        if direct:
            try:
                factor = splu(matrix)
            except (RuntimeError, MatrixRankWarning) as e:
                raise PoissonError(f"sparse factorization failed: {e}", float("inf")) from e
        else:
            ilu = spilu(matrix, drop_tol=1e-5, fill_factor=20)
            preconditioner = LinearOperator(matrix.shape, ilu.solve)

        self.system = PoissonSystem(matrix, row_scale, fingerprint, maps.n1, maps.n2, wall_factor, factor,
                                    preconditioner)
        return self.system

    def solve(self, system: PoissonSystem, omega1: np.ndarray, check: bool = True) -> np.ndarray:
        psi1 = np.zeros((system.n2 + 1, system.n1 + 1))
        b = system.row_scale * omega1[:-1, 1:-1].ravel()
        if not np.any(b):
            return psi1

        if system.factor is not None:
            x, residual = self._refine(system, b, check)
            tolerance = DIRECT_TOLERANCE
            if check and self._relative(residual, b) > DIRECT_TOLERANCE:
                # refinement stalls at the round-off floor of ill-conditioned maps
                x, residual = self._iterate(system, b, x, LinearOperator(system.matrix.shape, system.factor.solve))
                tolerance = ITERATIVE_TOLERANCE
        else:
            x, residual = self._iterate(system, b, None, system.preconditioner)
            tolerance = ITERATIVE_TOLERANCE

        if check:
            achieved = self._relative(residual, b)
            if not achieved <= tolerance:
                raise PoissonError("stream function residual above contract", achieved)
        psi1[:-1, 1:-1] = x.reshape(system.n2, system.n1 - 1)
        return psi1

    def _refine(self, system: PoissonSystem, b: np.ndarray, check: bool) -> tuple[np.ndarray, np.ndarray]:
        """Direct solve plus iterative refinement until the residual meets the contract or stops shrinking."""
        x = system.factor.solve(b)
        residual = b - system.matrix @ x
        if not check:
            return x, residual
        achieved = self._relative(residual, b)
        for _ in range(REFINEMENT_STEPS):
            if achieved <= DIRECT_TOLERANCE / 10.0:
                break
            candidate = x + system.factor.solve(residual)
            candidate_residual = b - system.matrix @ candidate
            candidate_achieved = self._relative(candidate_residual, b)
            if candidate_achieved < achieved:
                x, residual = candidate, candidate_residual
            if candidate_achieved > STALL_RATIO * achieved:
                break
            achieved = candidate_achieved
        return x, residual

    def _iterate(self, system: PoissonSystem, b: np.ndarray, x0: np.ndarray | None,
                 preconditioner: LinearOperator) -> tuple[np.ndarray, np.ndarray]:
        x, info = bicgstab(system.matrix, b, x0=x0, rtol=ITERATIVE_TOLERANCE / 10.0, atol=0.0,
                           maxiter=ITERATIVE_MAX_ITERATIONS, M=preconditioner)
        residual = b - system.matrix @ x
        if x0 is not None:
            start = b - system.matrix @ x0
            if self._relative(start, b) < self._relative(residual, b):
                x, residual = x0, start
        if info > 0 and self._relative(residual, b) > ITERATIVE_TOLERANCE:
            raise PoissonError(f"iterative solve stopped after {info} iterations", self._relative(residual, b))
        return x, residual

    def residual(self, system: PoissonSystem, psi1: np.ndarray, omega1: np.ndarray) -> float:
        b = system.row_scale * omega1[:-1, 1:-1].ravel()
        if not np.any(b):
            return float(np.max(np.abs(system.matrix @ psi1[:-1, 1:-1].ravel())))
        return self._relative(b - system.matrix @ psi1[:-1, 1:-1].ravel(), b)

    @staticmethod
    def apply(system: PoissonSystem, psi1: np.ndarray) -> np.ndarray:
        """-(psi_rr + 3/r psi_r + psi_zz) at the unknown nodes, without equilibration."""
        out = np.zeros((system.n2 + 1, system.n1 + 1))
        values = (system.matrix @ psi1[:-1, 1:-1].ravel()) / system.row_scale
        out[:-1, 1:-1] = values.reshape(system.n2, system.n1 - 1)
        return out

    @staticmethod
    def wall_vorticity(system: PoissonSystem, psi1: np.ndarray) -> np.ndarray:
        """No-slip wall value of omega1 from the one-sided Thom-type relation."""
        return -system.wall_factor * psi1[-2, :]

    @staticmethod
    def _relative(residual: np.ndarray, b: np.ndarray) -> float:
        return float(np.max(np.abs(residual)) / np.max(np.abs(b)))

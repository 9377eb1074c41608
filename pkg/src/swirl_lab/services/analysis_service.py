#!/usr/bin/env python3
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from attrs import define
from scipy import stats

from .diagnostics_service import DiagnosticsService
from .discretization_service import DiscretizationService
from .dto import ErrorRow, ErrorTable, FieldState, MeshPair, Parity, RescaledProfile, Snapshot, VelocityGrids
from .field_service import FieldService
from .mesh_service import MeshService
from ..common.singleton import Singleton
from ..common.utils import AnalysisError, AnyPath
from ..repository import Repository
from ..repository.dao import DiagnosticsRecord, FitResult, Transform

__all__ = [
    "AnalysisService",
    "CASE1_PRESETS",
    "CASE4_PRESETS",
    "convergence_orders",
    "FitPreset"
]

MIN_SAMPLES = 10

LATE_WINDOW = (0.0021007568, 0.0022742813)
VORTICITY_WINDOW = (0.0018441297, 0.0022742812)
AXIAL_WINDOW = (0.0016006384, 0.0022742813)
RADIAL_WINDOW = (0.0022052019, 0.0022742813)

POSITIVE_TRANSFORMS = (Transform.Inverse, Transform.InversePower, Transform.LogCorrected, Transform.Power)


@define(frozen=True)
class FitPreset:
    """Which diagnostics column to fit, how to linearize it and over which window."""
    quantity: str
    column: str
    transform: Transform
    exponent: float | None = None
    window: tuple[float, float] | None = None
    companion: str | None = None


CASE1_PRESETS = (
    FitPreset("u1_max^-1", "u1_max", Transform.Inverse, window=LATE_WINDOW),
    FitPreset("psi1z_max^-1", "psi1z_max", Transform.Inverse, window=LATE_WINDOW),
    FitPreset("u_max^-2", "u_max", Transform.InversePower, 2.0, LATE_WINDOW),
    FitPreset("w_max^-1", "w_max", Transform.Inverse, window=VORTICITY_WINDOW),
    FitPreset("w1_max^-2/3", "w1_max", Transform.InversePower, 2.0 / 3.0, VORTICITY_WINDOW),
    FitPreset("(log(psi1z_max)*psi1_max)^-2", "psi1_max", Transform.LogCorrected, window=VORTICITY_WINDOW,
              companion="psi1z_max"),
    FitPreset("Z^2", "Z", Transform.Square, window=AXIAL_WINDOW),
    FitPreset("R^2", "R", Transform.Square, window=RADIAL_WINDOW)
)

CASE4_PRESETS = (
    FitPreset("R^3/2", "R", Transform.Power, 1.5),
    FitPreset("Z", "Z", Transform.Plain),
    FitPreset("u1_max^-1", "u1_max", Transform.Inverse),
    FitPreset("w1_max^-1/2", "w1_max", Transform.InversePower, 0.5),
    FitPreset("Z^2", "Z", Transform.Square),
    FitPreset("w1_max^-2/3", "w1_max", Transform.InversePower, 2.0 / 3.0)
)

# (r, theta, z) components of both velocity and vorticity
VECTOR_PARITIES = ((Parity.Odd, Parity.Even), (Parity.Odd, Parity.Odd), (Parity.Even, Parity.Odd))


def convergence_orders(sizes: Sequence[float], errors: Sequence[float]) -> list[float | None]:
    """log(e_prev / e) / log(n / n_prev) for every row after the first."""
    orders: list[float | None] = [None]
    for k in range(1, len(errors)):
        e_prev, e = errors[k - 1], errors[k]
        if e_prev > 0.0 and e > 0.0 and sizes[k] != sizes[k - 1]:
            orders.append(math.log(e_prev / e) / math.log(sizes[k] / sizes[k - 1]))
        else:
            orders.append(None)
    return orders


class AnalysisService(metaclass=Singleton):
    def __init__(self):
        self.diagnostics_service: DiagnosticsService = DiagnosticsService()
        self.discretization_service: DiscretizationService = DiscretizationService()
        self.field_service: FieldService = FieldService()
        self.mesh_service: MeshService = MeshService()
        self.repository: Repository = Repository()

    # scaling fits

    @staticmethod
    def linearize(y: np.ndarray, transform: Transform, exponent: float | None = None,
                  companion: np.ndarray | None = None) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if transform in POSITIVE_TRANSFORMS:
            bad = np.flatnonzero(~(y > 0.0))
            if transform is Transform.LogCorrected:
                if companion is None:
                    raise AnalysisError("log-corrected fit needs a companion series")
                companion = np.asarray(companion, dtype=float)
                bad = np.union1d(bad, np.flatnonzero(~(companion > 0.0) | (companion == 1.0)))
            if bad.size:
                raise AnalysisError(f"{transform.value} transform needs positive samples; offending indices "
                                    f"{bad.tolist()}")
        if transform is Transform.Inverse:
            return 1.0 / y
        if transform is Transform.InversePower:
            return y ** -_exponent(transform, exponent)
        if transform is Transform.Power:
            return y ** _exponent(transform, exponent)
        if transform is Transform.Square:
            return y ** 2
        if transform is Transform.LogCorrected:
            return (np.log(companion) * y) ** -2.0
        return y.copy()

    def fit_power_law(self, t: Sequence[float], y: Sequence[float], transform: Transform,
                      window: tuple[float, float], exponent: float | None = None,
                      companion: Sequence[float] | None = None, quantity: str = "") -> FitResult:
        """Least-squares line through (t, g(y)) restricted to the window."""
        t1, t2 = window
        if not t1 < t2:
            raise AnalysisError(f"empty fit window [{t1!r}, {t2!r}]")
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (t >= t1) & (t <= t2)
        if int(inside.sum()) < MIN_SAMPLES:
            raise AnalysisError(f"{int(inside.sum())} samples in [{t1!r}, {t2!r}], need at least {MIN_SAMPLES}")

        extra = None if companion is None else np.asarray(companion, dtype=float)[inside]
        x = t[inside]
        g = self.linearize(y[inside], transform, exponent, extra)
        if np.ptp(x) == 0.0:
            raise AnalysisError("all samples in the window share one time")

        fit = stats.linregress(x, g)
        predicted = fit.intercept + fit.slope * x
        ss_res = float(np.sum((g - predicted) ** 2))
        ss_tot = float(np.sum((g - g.mean()) ** 2))
        r_square = 1.0 if ss_tot == 0.0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
        t_est = -fit.intercept / fit.slope if fit.slope != 0.0 else math.nan
        return FitResult(quantity=quantity or transform.value, transform=transform, slope=float(fit.slope),
                         intercept=float(fit.intercept), T_est=float(t_est), r_square=r_square,
                         window=(float(t1), float(t2)), samples=int(inside.sum()), exponent=exponent)

    @staticmethod
    def resolve_window(window: tuple[float, float], t_last: float) -> tuple[float, float]:
        """Scale a window that ends past the data so that it ends on the last sample."""
        t1, t2 = window
        if t_last >= t2:
            return window
        scale = t_last / t2
        return t1 * scale, t_last

    def fit_preset(self, records: Sequence[DiagnosticsRecord], preset: FitPreset,
                   window: tuple[float, float] | None = None) -> FitResult:
        if not records:
            raise AnalysisError("no diagnostics to fit")
        t = np.array([r.t for r in records])
        y = np.array([getattr(r, preset.column) for r in records])
        companion = None if preset.companion is None else np.array([getattr(r, preset.companion) for r in records])
        window = window or preset.window or self.late_window(t)
        return self.fit_power_law(t, y, preset.transform, self.resolve_window(window, float(t[-1])),
                                  preset.exponent, companion, preset.quantity)

    @staticmethod
    def late_window(t: np.ndarray, share: float = 1.0 / 3.0) -> tuple[float, float]:
        t_first, t_last = float(t[0]), float(t[-1])
        return t_last - share * (t_last - t_first), t_last

    def fit_report(self, records: Sequence[DiagnosticsRecord], presets: Iterable[FitPreset],
                   window: tuple[float, float] | None = None) -> list[FitResult]:
        return [self.fit_preset(records, preset, window) for preset in presets]

    def case4_two_scale_report(self, records: Sequence[DiagnosticsRecord],
                               window: tuple[float, float] | None = None) -> list[FitResult]:
        """R^3/2, Z, u1^-1 and w1^-1/2 linear in t, with the one-scale Z^2 and w1^-2/3 fits for contrast."""
        return self.fit_report(records, CASE4_PRESETS, window)

    # self-similar profiles

    def rescale_profile(self, field: np.ndarray, maps: MeshPair, R: float, Z: float,
                        xi_range: tuple[float, float] = (-1.0, 1.0), zeta_range: tuple[float, float] = (0.0, 2.0),
                        m: int = 101, normalize: bool = True, r_parity: Parity = Parity.Even,
                        z_parity: Parity = Parity.Odd, t: float = 0.0) -> RescaledProfile:
        if not Z > 0.0:
            raise AnalysisError(f"axial scale must be positive, got {Z!r}")
        if m < 2:
            raise AnalysisError(f"profile needs at least two samples per axis, got {m}")
        xi = np.linspace(*xi_range, m)
        zeta = np.linspace(*zeta_range, m)
        r = R + Z * xi
        z = Z * zeta
        r_inside = (r >= 0.0) & (r <= maps.r.domain_length)
        z_inside = (z >= 0.0) & (z <= maps.z.domain_length)
        clipped = 1.0 - float(np.outer(r_inside, z_inside).mean())
        r = np.clip(r, 0.0, maps.r.domain_length)
        z = np.clip(z, 0.0, maps.z.domain_length)

        values = self.field_service.sampler(field, maps, r_parity, z_parity).grid(r, z)
        norm = float(np.max(np.abs(field)))
        if normalize and norm > 0.0:
            values = values / norm
        return RescaledProfile(xi=xi, zeta=zeta, values=values, R=float(R), Z=float(Z), norm=norm,
                               clipped_fraction=clipped, t=t)

    @staticmethod
    def profile_distance(a: RescaledProfile, b: RescaledProfile) -> float:
        if a.values.shape != b.values.shape or not (np.array_equal(a.xi, b.xi) and np.array_equal(a.zeta, b.zeta)):
            raise AnalysisError("profiles are sampled on different grids")
        return float(np.max(np.abs(a.values - b.values)))

    # resolution study

    def load_snapshot(self, path: AnyPath) -> Snapshot:
        header, (u1, omega1, psi1) = self.repository.load_snapshot(path)
        maps = self.mesh_service.build_maps(header.r_spec, header.z_spec, header.n1, header.n2)
        return Snapshot(header, FieldState(u1, omega1, psi1, header.t, header.step), maps, str(path))

    def resolution_study(self, runs: Sequence[Snapshot], reference: Snapshot,
                         time_tolerance: float = 1e-12) -> ErrorTable:
        """Errors of each run against the reference, ordered by resolution, with observed orders."""
        if not runs:
            raise AnalysisError("resolution study needs at least one run")
        t_ref = reference.state.t
        for run in runs:
            if abs(run.state.t - t_ref) > time_tolerance * max(1.0, abs(t_ref)):
                raise AnalysisError(f"snapshot '{run.path}' is at t={run.state.t!r}, reference at t={t_ref!r}")

        runs = sorted(runs, key=lambda s: s.maps.n1)
        rows: dict[tuple[str, str], list[ErrorRow]] = {}
        for run in runs:
            for row in self._errors(run, reference):
                rows.setdefault((row.variable, row.norm), []).append(row)

        table = ErrorTable()
        for series in rows.values():
            orders = convergence_orders([r.n for r in series], [r.error for r in series])
            for row, order in zip(series, orders):
                table.rows.append(row.copy(order=order))
        return table

    def _errors(self, run: Snapshot, reference: Snapshot) -> list[ErrorRow]:
        n = run.maps.n1
        r = run.maps.r.values
        z = run.maps.z.values
        rows = []
        for name in ("u1", "omega1", "psi1"):
            coarse = getattr(run.state, name)
            fine = getattr(reference.state, name)
            fine_norm = float(np.max(np.abs(fine)))
            if fine_norm == 0.0:
                raise AnalysisError(f"reference {name} vanishes identically")
            rows.append(ErrorRow(name, "scalar_inf", n, abs(float(np.max(np.abs(coarse))) - fine_norm) / fine_norm))
            on_coarse = self.field_service.sampler(fine, reference.maps).grid(r, z)
            rows.append(ErrorRow(name, "function_inf", n, float(np.max(np.abs(coarse - on_coarse))) / fine_norm))

        run_velocity = self._velocity(run)
        reference_velocity = self._velocity(reference)
        for name, k in (("ur", 0), ("uz", 2)):
            fine = reference_velocity[k]
            fine_norm = float(np.max(np.abs(fine)))
            if fine_norm == 0.0:
                raise AnalysisError(f"reference {name} vanishes identically")
            on_coarse = self.field_service.sampler(fine, reference.maps, *VECTOR_PARITIES[k]).grid(r, z)
            rows.append(ErrorRow(name, "function_inf", n,
                                 float(np.max(np.abs(run_velocity[k] - on_coarse))) / fine_norm))

        for name, coarse, fine, parities in (
                ("velocity", run_velocity, reference_velocity, VECTOR_PARITIES),
                ("vorticity", self._vorticity(run), self._vorticity(reference), VECTOR_PARITIES)):
            on_coarse = [self.field_service.sampler(f, reference.maps, *p).grid(r, z) for f, p in zip(fine, parities)]
            difference = np.sqrt(sum((c - f) ** 2 for c, f in zip(coarse, on_coarse)))
            magnitude = float(np.max(np.sqrt(sum(f ** 2 for f in fine))))
            if magnitude == 0.0:
                raise AnalysisError(f"reference {name} vanishes identically")
            rows.append(ErrorRow(name, "vector_inf", n, float(np.max(difference)) / magnitude))

        d = self.diagnostics_service
        for name, coarse, fine in (
                ("w_max", d.vorticity_max(run.state, run.maps), d.vorticity_max(reference.state, reference.maps)),
                ("energy", d.kinetic_energy(self._velocity_grids(run), run.maps),
                 d.kinetic_energy(self._velocity_grids(reference), reference.maps))):
            if fine == 0.0:
                raise AnalysisError(f"reference {name} vanishes identically")
            rows.append(ErrorRow(name, "scalar", n, abs(coarse - fine) / abs(fine)))
        return rows

    def _velocity_grids(self, snapshot: Snapshot) -> VelocityGrids:
        return self.discretization_service.velocity_from_psi(snapshot.state.psi1, snapshot.state.u1, snapshot.maps)

    def _velocity(self, snapshot: Snapshot) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self._velocity_grids(snapshot)
        return v.ur, v.utheta, v.uz

    def _vorticity(self, snapshot: Snapshot) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = self.discretization_service.vorticity_vector(snapshot.state.u1, snapshot.state.omega1, snapshot.maps)
        return w.omega_r, w.omega_theta, w.omega_z


def _exponent(transform: Transform, exponent: float | None) -> float:
    if exponent is None:
        raise AnalysisError(f"{transform.value} transform needs an exponent")
    return exponent

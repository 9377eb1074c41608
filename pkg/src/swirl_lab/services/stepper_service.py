#!/usr/bin/env python3
from __future__ import annotations

from typing import Any, Callable

import numpy as np

from .diagnostics_service import DiagnosticsService
from .discretization_service import DiscretizationService
from .dto import FieldState, MeshPair, PoissonSystem, RunResult, Tendencies, VelocityGrids
from .field_service import FieldService
from .mesh_service import MeshService
from .poisson_service import PoissonService
from ..common.singleton import Singleton
from ..common.utils import AnyPath, BlowUpError, ConfigError, DegeneratePeakError, MeshConstructionError, \
    NumericalError
from ..repository import Repository
from ..repository.dao import CheckpointHeader, DiagnosticsRecord, FailureRecord, Mode, PhaseSpec, SimConfig, \
    SnapshotHeader, StepRecord, TerminationReason

__all__ = [
    "Forcing",
    "RunHandler",
    "shift_streak",
    "StepperService"
]

Forcing = Callable[[float, MeshPair], tuple[np.ndarray, np.ndarray]]

CFL_NUMBER = 0.2
DIFFUSION_NUMBER = 0.1
GROWTH_LIMIT = 1e-3
DIAGNOSTICS_BUFFER = 256


def shift_streak(old: PhaseSpec, new: PhaseSpec, streak: int, tolerance: float) -> int:
    """Signed count of consecutive proposals that move the nodes beyond tolerance in one direction."""
    old_nodes = np.asarray(old.physical_nodes)
    shift = (np.asarray(new.physical_nodes) - old_nodes) / old_nodes
    if not np.any(np.abs(shift) > tolerance):
        return 0
    direction = 1 if float(np.mean(shift)) > 0.0 else -1
    return streak + direction if streak * direction > 0 else direction


def _same_layout(old: PhaseSpec, new: PhaseSpec) -> bool:
    return old.fraction_nodes == new.fraction_nodes and len(old.physical_nodes) == len(new.physical_nodes)


class StepperService(metaclass=Singleton):
    def __init__(self):
        self.discretization_service: DiscretizationService = DiscretizationService()
        self.field_service: FieldService = FieldService()
        self.poisson_service: PoissonService = PoissonService()
        self.repository: Repository = Repository()

    @staticmethod
    def adaptive_dt(state: FieldState, velocity: VelocityGrids, maps: MeshPair, nu: float,
                    dt_cap: float = 2.5e-7) -> StepRecord:
        umax = max(float(np.max(np.abs(velocity.ur / maps.r.density[:, None]))),
                   float(np.max(np.abs(velocity.uz / maps.z.density[None, :]))))
        u1_norm = float(np.max(np.abs(state.u1)))
        if not (np.isfinite(umax) and np.isfinite(u1_norm)):
            raise BlowUpError(f"non-finite norms at t={state.t!r}", reason="non_finite")

        cfl = CFL_NUMBER * min(maps.r.h, maps.z.h) / umax if umax > 0.0 else np.inf
        growth = GROWTH_LIMIT / u1_norm if u1_norm > 0.0 else np.inf
        k1 = float(min(cfl, growth, dt_cap))
        if nu > 0.0:
            z_cells = float(np.min(maps.z.h * maps.z.density)) ** 2
            r_cells = float(np.min(maps.r.h * maps.r.density)) ** 2
            k2 = DIFFUSION_NUMBER * min(z_cells, r_cells) / nu
        else:
            k2 = np.inf
        return StepRecord(t=state.t, dt=min(k1, k2), k1=k1, k2=float(k2), step=state.step)

    def rk2_step(self, state: FieldState, maps: MeshPair, system: PoissonSystem, config: SimConfig,
                 dt: float | None = None, forcing: Forcing | None = None, check_residual: bool = False,
                 velocity: VelocityGrids | None = None) -> FieldState:
        """Explicit midpoint step of (u1, omega1) with psi1 closed after each stage."""
        nu = config.nu_effective
        d = self.discretization_service
        if velocity is None:
            velocity = d.velocity_from_psi(state.psi1, state.u1, maps)
        if dt is None:
            dt = self.adaptive_dt(state, velocity, maps, nu, config.dt_cap).dt

        k1 = self._tendencies(state, velocity, maps, nu, forcing)
        half = FieldState(state.u1 + 0.5 * dt * k1.du1_dt, state.omega1 + 0.5 * dt * k1.domega1_dt,
                          state.psi1.copy(), state.t + 0.5 * dt, state.step)
        self._close(half, system, config, config.psi_solves_per_step == 2, check_residual)

        k2 = self._tendencies(half, d.velocity_from_psi(half.psi1, half.u1, maps), maps, nu, forcing)
        new = FieldState(state.u1 + dt * k2.du1_dt, state.omega1 + dt * k2.domega1_dt, state.psi1.copy(),
                         state.t + dt, state.step + 1)
        return self._close(new, system, config, True, check_residual)

    def _tendencies(self, state: FieldState, velocity: VelocityGrids, maps: MeshPair, nu: float,
                    forcing: Forcing | None) -> Tendencies:
        tendencies = self.discretization_service.rhs(state, velocity, maps, nu)
        if forcing is not None:
            du1, domega1 = forcing(state.t, maps)
            tendencies = Tendencies(tendencies.du1_dt + du1, tendencies.domega1_dt + domega1)
        return tendencies

    def _close(self, state: FieldState, system: PoissonSystem, config: SimConfig, solve: bool,
               check: bool) -> FieldState:
        self.field_service.enforce_symmetry(state)
        state.u1[-1, :] = 0.0
        if solve:
            state.psi1 = self.poisson_service.solve(system, state.omega1, check)
        if config.mode is Mode.NavierStokes:
            state.omega1[-1, :] = self.poisson_service.wall_vorticity(system, state.psi1)
            state.omega1[-1, [0, -1]] = 0.0
        else:
            state.omega1[-1, :] = 0.0
        return state

    def run(self, config: SimConfig, forcing: Forcing | None = None) -> RunResult:
        return RunHandler(config, forcing=forcing).run()

    def resume(self, run_dir: AnyPath | None = None, overrides: dict[str, Any] | None = None) -> RunResult:
        if run_dir is not None:
            self.repository.set_output_dir(run_dir)
        path = self.repository.latest_checkpoint()
        header, (u1, omega1, psi1) = self.repository.load_checkpoint(path)
        try:
            config = header.config.copy(**(overrides or {}))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid resume override: {e}") from e

        mesh_service = MeshService()
        maps = mesh_service.build_maps(header.r_spec, header.z_spec, config.n1, config.n2)
        state = FieldState(u1, omega1, psi1, header.t, header.step)
        kept = [r for r in self.repository.load_diagnostics() if r.step <= header.step]
        self.repository.write_diagnostics(kept)
        return RunHandler(config, state=state, maps=maps, bkm=header.bkm, w_prev=header.w_max, dt=header.dt,
                          streaks=(header.r_streak, header.z_streak)).run()


class RunHandler:
    def __init__(self, config: SimConfig, state: FieldState | None = None, maps: MeshPair | None = None,
                 bkm: float = 0.0, w_prev: float | None = None, forcing: Forcing | None = None, dt: float = 0.0,
                 streaks: tuple[int, int] = (0, 0)):
        self.diagnostics_service: DiagnosticsService = DiagnosticsService()
        self.discretization_service: DiscretizationService = DiscretizationService()
        self.field_service: FieldService = FieldService()
        self.mesh_service: MeshService = MeshService()
        self.poisson_service: PoissonService = PoissonService()
        self.repository: Repository = Repository()
        self.stepper_service: StepperService = StepperService()

        self.config = config
        self.fresh = state is None
        self.forcing = forcing
        self.maps = maps if maps is not None else self.mesh_service.initial_maps(config)
        self.system = self.poisson_service.assemble(self.maps)
        self.state = state if state is not None else self.field_service.init_case(config.case, self.maps)
        self.bkm = bkm
        self.w_prev = w_prev if w_prev is not None else self.diagnostics_service.vorticity_max(self.state, self.maps)
        self.dt = dt
        self.streaks = list(streaks)
        self.start_step = self.state.step
        self.matched = sum(1 for t in config.snapshot_times if t <= self.state.t)
        self.notices: set[str] = set()
        self.pending: list[DiagnosticsRecord] = []
        self.records: list[DiagnosticsRecord] = []
        self.remeshes: list[StepRecord] = []

    def run(self) -> RunResult:
        if self.fresh:
            self.repository.save_config(self.config)
            self.repository.write_diagnostics([])
            velocity = self._velocity(self.state)
            self._record(self.diagnostics_service.record(self.state, self.maps, velocity, self.bkm, 0.0))
            self.matched = 0
            self._emit_matched(self.state, self.state)
            if self.config.snapshot_every:
                self._snapshot(f"snapshot-{self.state.step:09d}.zip", self.state)

        try:
            while (reason := self._stop_reason()) is None:
                self._advance()
        except NumericalError as e:
            self._fail(e)
            raise

        self._flush()
        if self.fresh or self.state.step > self.start_step:
            self._checkpoint()
        return RunResult(termination=reason, state=self.state, maps=self.maps,
                         steps=self.state.step - self.start_step, records=self.records, remeshes=self.remeshes,
                         mode=self.config.mode)

    def _stop_reason(self) -> TerminationReason | None:
        if self.state.step >= self.config.max_steps:
            return TerminationReason.MaxSteps
        if self.state.t >= self.config.t_end:
            return TerminationReason.EndTime
        return None

    def _velocity(self, state: FieldState) -> VelocityGrids:
        return self.discretization_service.velocity_from_psi(state.psi1, state.u1, self.maps)

    def _advance(self) -> None:
        config = self.config
        period = config.period_at(self.state.step)
        remeshed = self._remesh(period)

        before = self.state
        velocity = self._velocity(before)
        step = self.stepper_service.adaptive_dt(before, velocity, self.maps, config.nu_effective, config.dt_cap)
        step.period = period
        step.remeshed = remeshed
        if remeshed:
            self.remeshes.append(step)
        if step.dt < config.dt_min:
            raise BlowUpError(f"time step {step.dt!r} fell below {config.dt_min!r} at t={before.t!r}",
                              reason=TerminationReason.DtUnderflow.value)
        dt = min(step.dt, config.t_end - before.t)

        check = config.debug or (before.step + 1) % config.residual_check_every == 0
        after = self.stepper_service.rk2_step(before, self.maps, self.system, config, dt, self.forcing, check,
                                              velocity)
        if not after.is_finite():
            raise BlowUpError(f"non-finite values after step {after.step} at t={after.t!r}")

        w = self.diagnostics_service.vorticity_max(after, self.maps)
        self.bkm = self.diagnostics_service.bkm_accumulate(self.bkm, before.t, self.w_prev, after.t, w)
        self.w_prev = w
        self.dt = dt
        self.state = after
        self._emit_matched(before, after)

        if after.step % config.diag_every == 0:
            self._record(self.diagnostics_service.record(after, self.maps, self._velocity(after), self.bkm, dt))
        if config.snapshot_every and after.step % config.snapshot_every == 0:
            self._snapshot(f"snapshot-{after.step:09d}.zip", after)
        if config.checkpoint_every and after.step % config.checkpoint_every == 0:
            self._flush()
            self._checkpoint()
        if config.verbose and config.progress_every and after.step % config.progress_every == 0:
            print(f"step={after.step} t={after.t:.10e} dt={dt:.3e} k1={step.k1:.3e} k2={step.k2:.3e} "
                  f"period={step.period} u1_max={np.max(np.abs(after.u1)):.6e} w_max={w:.6e}")

    def _remesh(self, period: int) -> bool:
        try:
            result = self.mesh_service.remesh_check(self.state, self.maps, period, self.config)
        except DegeneratePeakError as e:
            self._notice("degenerate", f"[N] remesh skipped: {e}")
            return False
        if result is None:
            self.streaks = [0, 0]
            return False

        r_spec = self._accept(0, self.maps.r.spec, result.r_spec)
        z_spec = self._accept(1, self.maps.z.spec, result.z_spec)
        if r_spec is None and z_spec is None:
            return False
        r_spec = r_spec or self.maps.r.spec
        z_spec = z_spec or self.maps.z.spec
        try:
            maps = self.mesh_service.build_maps(r_spec, z_spec, self.config.n1, self.config.n2)
        except MeshConstructionError as e:
            self._notice(f"infeasible-{period}", f"[N] remesh skipped at step {self.state.step}: {e}")
            return False

        # the handler keeps the old grid until the interpolated state is closed on the new one
        system = self.poisson_service.assemble(maps)
        state = self.mesh_service.interpolate_fields(self.state, self.maps, maps)
        state = self.stepper_service._close(state, system, self.config, True, True)
        self.maps = maps
        self.system = system
        self.state = state
        if self.config.verbose:
            print(f"[R] step={self.state.step} t={self.state.t:.10e} r_nodes={r_spec.physical_nodes} "
                  f"z_nodes={z_spec.physical_nodes}")
        return True

    def _accept(self, axis: int, old: PhaseSpec, new: PhaseSpec | None) -> PhaseSpec | None:
        """Proposed spec once its layout changes or its nodes drift one way for remesh_patience checks."""
        if new is None:
            self.streaks[axis] = 0
            return None
        if not _same_layout(old, new):
            self.streaks[axis] = 0
            return new
        self.streaks[axis] = shift_streak(old, new, self.streaks[axis], self.config.remesh_tolerance)
        if abs(self.streaks[axis]) < self.config.remesh_patience:
            return None
        self.streaks[axis] = 0
        return new

    def _emit_matched(self, before: FieldState, after: FieldState) -> None:
        times = self.config.snapshot_times
        while self.matched < len(times) and times[self.matched] <= after.t:
            target = times[self.matched]
            if target >= before.t:
                state = after if target == after.t else self.field_service.blend(before, after, target)
                self._snapshot(f"matched-{self.matched:03d}.zip", state)
            self.matched += 1

    def _snapshot(self, name: str, state: FieldState) -> None:
        header = SnapshotHeader(n1=self.config.n1, n2=self.config.n2, t=state.t, step=state.step,
                                case=self.config.case, r_spec=self.maps.r.spec, z_spec=self.maps.z.spec)
        path = self.repository.save_snapshot(name, header, (state.u1, state.omega1, state.psi1))
        if self.config.verbose:
            print(f"[S] {path}")

    def _checkpoint(self) -> str:
        header = CheckpointHeader(config=self.config, step=self.state.step, t=self.state.t, bkm=self.bkm,
                                  w_max=self.w_prev, r_spec=self.maps.r.spec, z_spec=self.maps.z.spec, dt=self.dt,
                                  r_streak=self.streaks[0], z_streak=self.streaks[1])
        path = self.repository.save_checkpoint(header, (self.state.u1, self.state.omega1, self.state.psi1))
        if self.config.verbose:
            print(f"[C] {path}")
        return str(path)

    def _record(self, record: DiagnosticsRecord) -> None:
        self.pending.append(record)
        self.records.append(record)
        if len(self.pending) >= DIAGNOSTICS_BUFFER:
            self._flush()

    def _flush(self) -> None:
        if self.pending:
            self.repository.write_diagnostics(self.pending, append=True)
            self.pending = []

    def _fail(self, error: NumericalError) -> None:
        self._flush()
        checkpoint = self._checkpoint()
        self.repository.save_failure(FailureRecord(error=error.__class__.__name__, message=str(error),
                                                   step=self.state.step, t=self.state.t, checkpoint=checkpoint))

    def _notice(self, key: str, message: str) -> None:
        if key not in self.notices:
            self.notices.add(key)
            print(message)

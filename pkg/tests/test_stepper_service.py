#!/usr/bin/env python3
from __future__ import annotations

import math

import numpy as np
import pytest

from swirl_lab.common.utils import BlowUpError, PoissonError, json_loads
from swirl_lab.constants import DIAGNOSTICS_FILE, FAILURE_FILE
from swirl_lab.repository import Repository
from swirl_lab.repository.dao import Mode, PhaseSpec, SimConfig, TerminationReason
from swirl_lab.services import DiscretizationService, FieldService, MeshService, PoissonService, StepperService, \
    initial_u1, shift_streak
from swirl_lab.services.dto import FieldState, RemeshResult, VelocityGrids

QUIET = dict(snapshot_every=0, checkpoint_every=0)


def zero_velocity(shape):
    return VelocityGrids(*(np.zeros(shape) for _ in range(7)))


def test_time_step_at_rest_is_capped(uniform_maps):
    maps = uniform_maps(64)
    r, z = maps.meshgrid()
    state = FieldState(initial_u1(1, r, z), np.zeros_like(r), np.zeros_like(r))

    record = StepperService().adaptive_dt(state, zero_velocity(r.shape), maps, 1.0 / 64 ** 2)

    assert record.k1 == 2.5e-7
    assert record.k2 == pytest.approx(0.1 * min(0.5, 1.0) ** 2)
    assert record.dt == 2.5e-7


def test_time_step_follows_cfl(uniform_maps):
    maps = uniform_maps(64)
    velocity = zero_velocity((65, 65))
    velocity.ur[10, 10] = 1e6
    state = FieldState(np.zeros((65, 65)), np.zeros((65, 65)), np.zeros((65, 65)))

    record = StepperService().adaptive_dt(state, velocity, maps, 0.0)

    assert record.k1 == pytest.approx(0.2 / 64 / 1e6)
    assert math.isinf(record.k2)
    assert record.dt == record.k1


def test_time_step_rejects_non_finite_state(uniform_maps):
    maps = uniform_maps(32)
    state = FieldState(np.full((33, 33), np.nan), np.zeros((33, 33)), np.zeros((33, 33)))

    with pytest.raises(BlowUpError):
        StepperService().adaptive_dt(state, zero_velocity((33, 33)), maps, 0.0)


def test_zero_state_stays_zero(uniform_maps):
    maps = uniform_maps(32)
    zero = np.zeros((33, 33))
    state = FieldState(zero, zero.copy(), zero.copy())
    config = SimConfig(n1=32, n2=32)

    after = StepperService().rk2_step(state, maps, PoissonService().assemble(maps), config)

    assert after.t == 2.5e-7
    assert after.step == 1
    for v in (after.u1, after.omega1, after.psi1):
        assert not np.any(v)


def test_midpoint_rule_is_second_order_in_time(uniform_maps):
    maps = uniform_maps(32)
    r, z = maps.meshgrid()
    config = SimConfig(n1=32, n2=32, numerical_viscosity=False)
    system = PoissonService().assemble(maps)
    profile = (1.0 - r ** 2) ** 2

    def forcing(t, _maps):
        return 100.0 * t * profile * np.sin(2.0 * np.pi * z), 100.0 * t * profile * np.sin(4.0 * np.pi * z)

    finals = []
    for steps in (10, 20, 40):
        state = FieldState(1e-3 * initial_u1(1, r, z), np.zeros_like(r), np.zeros_like(r))
        FieldService().enforce_symmetry(state)
        dt = 0.01 / steps
        for _ in range(steps):
            state = StepperService().rk2_step(state, maps, system, config, dt=dt, forcing=forcing)
        finals.append(state)

    for name in ("u1", "omega1"):
        coarse = np.max(np.abs(getattr(finals[0], name) - getattr(finals[1], name)))
        fine = np.max(np.abs(getattr(finals[1], name) - getattr(finals[2], name)))
        assert math.log2(coarse / fine) >= 1.9


def test_first_step_vorticity_follows_swirl_gradient():
    config = SimConfig(n1=64, n2=64)
    maps = MeshService().initial_maps(config)
    state = FieldService().init_case(1, maps)
    source = 2.0 * state.u1 * DiscretizationService().d_dz(state.u1, maps)

    after = StepperService().rk2_step(state, maps, PoissonService().assemble(maps), config)

    significant = np.abs(source) > 1e-3 * np.max(np.abs(source))
    significant[-1] = False
    assert np.count_nonzero(significant) > 0
    np.testing.assert_array_equal(np.sign(after.omega1[significant]), np.sign(source[significant]))


def test_period_boundaries_scale_with_resolution():
    config = SimConfig(n1=512, n2=512)

    assert config.period_starts == (15000, 20000)
    assert [config.period_at(s) for s in (0, 14999, 15000, 19999, 20000)] == [1, 1, 2, 2, 3]


def test_zero_steps_emit_initial_row(output_dir):
    result = StepperService().run(SimConfig(n1=32, n2=32, max_steps=0, **QUIET))

    assert result.termination is TerminationReason.MaxSteps
    assert result.steps == 0
    rows = Repository().load_diagnostics()
    assert len(rows) == 1
    assert rows[0].t == 0.0
    assert rows[0].step == 0


def test_run_keeps_symmetry_and_time_step_cap(output_dir):
    result = StepperService().run(SimConfig(n1=32, n2=32, max_steps=100, **QUIET))

    assert result.steps == 100
    state = result.state
    for v in (state.u1, state.omega1, state.psi1):
        assert not np.any(v[:, [0, -1]])
    assert not np.any(state.psi1[-1])
    rows = Repository().load_diagnostics()
    assert len(rows) == 101
    assert all(0.0 < r.dt <= 2.5e-7 for r in rows[1:])
    assert all(b.bkm >= a.bkm for a, b in zip(rows, rows[1:]))


def test_viscous_energy_does_not_grow(output_dir):
    StepperService().run(SimConfig(n1=32, n2=32, max_steps=1000, **QUIET))
    energy = np.array([r.energy for r in Repository().load_diagnostics()])

    assert np.all(energy <= np.maximum.accumulate(energy) * (1.0 + 1e-3))
    assert energy[-1] <= energy[0] * (1.0 + 1e-3)


def test_stop_at_end_time(output_dir):
    result = StepperService().run(SimConfig(n1=32, n2=32, t_end=1e-6 + 1e-7, **QUIET))

    assert result.termination is TerminationReason.EndTime
    assert result.state.t == pytest.approx(1.1e-6, rel=1e-12)
    assert result.steps == 5


def test_matched_time_snapshot(output_dir):
    StepperService().run(SimConfig(n1=32, n2=32, max_steps=6, snapshot_times=(1e-6,), **QUIET))

    header, _ = Repository().load_snapshot(output_dir / "snapshots" / "matched-000.zip")
    assert header.t == 1e-6


def test_navier_stokes_wall_vorticity(uniform_maps):
    maps = uniform_maps(32)
    config = SimConfig(n1=32, n2=32, mode=Mode.NavierStokes, nu=1e-3)
    system = PoissonService().assemble(maps)
    state = FieldService().init_case(1, maps)

    after = StepperService().rk2_step(state, maps, system, config)

    assert np.any(after.omega1[-1])
    np.testing.assert_allclose(after.omega1[-1, 1:-1], PoissonService().wall_vorticity(system, after.psi1)[1:-1])


def test_time_step_underflow_records_failure(output_dir):
    with pytest.raises(BlowUpError) as e:
        StepperService().run(SimConfig(n1=32, n2=32, dt_min=1.0, **QUIET))

    assert e.value.reason == "dt_underflow"
    failure = json_loads((output_dir / FAILURE_FILE).read_text())
    assert failure["error"] == "BlowUpError"
    assert failure["step"] == 0
    assert Repository().latest_checkpoint().exists()


def test_restart_reproduces_uninterrupted_run(tmp_path):
    config = SimConfig(n1=32, n2=32, max_steps=20, checkpoint_every=10, snapshot_every=0)

    Repository().set_output_dir(tmp_path / "straight")
    StepperService().run(config)
    Repository().set_output_dir(tmp_path / "restarted")
    StepperService().run(config.copy(max_steps=10))
    result = StepperService().resume(tmp_path / "restarted", {"max_steps": 20})

    assert result.steps == 10
    straight = (tmp_path / "straight" / DIAGNOSTICS_FILE).read_text()
    restarted = (tmp_path / "restarted" / DIAGNOSTICS_FILE).read_text()
    assert restarted == straight
    assert len(straight.splitlines()) == 22


def test_half_period_starts_round_up():
    assert SimConfig(n1=96, n2=96).period_starts == (2813, 3750)


def test_checkpoint_keeps_last_time_step_and_streaks(output_dir, monkeypatch):
    def drift(self, state, maps, period, config=None):
        spec = maps.r.spec
        return RemeshResult(r_spec=PhaseSpec(tuple(x * 1.12 for x in spec.physical_nodes), spec.fraction_nodes,
                                             spec.transition_fraction))

    monkeypatch.setattr(MeshService, "remesh_check", drift)
    StepperService().run(SimConfig(n1=32, n2=32, max_steps=3, remesh_patience=5, **QUIET))

    header, _ = Repository().load_checkpoint(Repository().latest_checkpoint())
    rows = Repository().load_diagnostics()
    assert header.dt == rows[-1].dt > 0.0
    assert (header.r_streak, header.z_streak) == (3, 0)


class TestRemeshing:
    CONFIG = dict(n1=32, n2=32, period2_start=10, period3_start=20, **QUIET)

    @staticmethod
    def scaled(factors):
        factors = iter(factors)

        def check(self, state, maps, period, config=None):
            spec = maps.r.spec
            factor = next(factors)
            return RemeshResult(r_spec=PhaseSpec(tuple(x * factor for x in spec.physical_nodes),
                                                 spec.fraction_nodes, spec.transition_fraction))

        return check

    @staticmethod
    def assert_invariants(result):
        state = result.state
        for v in (state.u1, state.omega1, state.psi1):
            assert not np.any(v[:, [0, -1]])
        assert not np.any(state.u1[-1])
        assert not np.any(state.psi1[-1])
        rows = Repository().load_diagnostics()
        assert [r.step for r in rows] == list(range(result.steps + 1))
        assert all(0.0 < r.dt <= 2.5e-7 for r in rows[1:])

    def test_shift_streak_counts_one_direction(self):
        old = PhaseSpec((0.01, 0.1), (0.4, 0.8))
        up = PhaseSpec((0.0112, 0.112), (0.4, 0.8))
        down = PhaseSpec((0.01 / 1.12, 0.1 / 1.12), (0.4, 0.8))
        small = PhaseSpec((0.0101, 0.1), (0.4, 0.8))

        assert shift_streak(old, up, 0, 0.05) == 1
        assert shift_streak(old, up, 4, 0.05) == 5
        assert shift_streak(old, down, 4, 0.05) == -1
        assert shift_streak(old, down, -2, 0.05) == -3
        assert shift_streak(old, small, 7, 0.05) == 0

    def test_oscillating_proposals_do_not_remesh(self, output_dir, monkeypatch):
        monkeypatch.setattr(MeshService, "remesh_check", self.scaled([1.12, 1.0 / 1.12] * 20))

        result = StepperService().run(SimConfig(max_steps=30, remesh_patience=5, **self.CONFIG))

        assert result.remeshes == []
        assert result.maps.r.spec == MeshService().initial_maps(SimConfig(**self.CONFIG)).r.spec

    def test_sustained_drift_remeshes_once_per_patience(self, output_dir, monkeypatch):
        monkeypatch.setattr(MeshService, "remesh_check", self.scaled([1.12] * 30))

        result = StepperService().run(SimConfig(max_steps=30, remesh_patience=5, **self.CONFIG))

        assert [s.step for s in result.remeshes] == [4, 9, 14, 19, 24, 29]
        assert all(s.remeshed for s in result.remeshes)
        self.assert_invariants(result)

    def test_layout_changes_remesh_at_period_starts(self, output_dir, monkeypatch):
        specs = {
            2: RemeshResult(PhaseSpec((0.002, 0.06, 0.25), (0.01, 0.45, 0.8)), PhaseSpec((0.1, 0.3), (0.45, 0.8))),
            3: RemeshResult(PhaseSpec((0.001, 0.03, 0.15), (0.02, 0.5, 0.9)), PhaseSpec((0.05, 0.2), (0.5, 0.9))),
        }
        monkeypatch.setattr(MeshService, "remesh_check", lambda self, state, maps, period, config=None:
                            specs.get(period))
        config = SimConfig(max_steps=30, **self.CONFIG)

        result = StepperService().run(config)

        assert [(s.step, s.period) for s in result.remeshes] == [(10, 2), (20, 3)]
        assert all(s.period == config.period_at(s.step) for s in result.remeshes)
        assert result.maps.r.spec == specs[3].r_spec
        assert result.maps.z.spec == specs[3].z_spec
        self.assert_invariants(result)

    def test_run_across_period_starts(self, output_dir):
        config = SimConfig(max_steps=30, residual_check_every=1, **self.CONFIG)

        result = StepperService().run(config)

        assert result.steps == 30
        assert len(result.remeshes) <= 4 + 2 * (30 // config.remesh_patience)
        assert all(s.period == config.period_at(s.step) for s in result.remeshes)
        self.assert_invariants(result)

    def test_failed_remesh_keeps_previous_grid(self, output_dir, monkeypatch):
        config = SimConfig(max_steps=3, **self.CONFIG)
        initial = MeshService().initial_maps(config)
        proposal = RemeshResult(PhaseSpec((0.002, 0.06, 0.25), (0.01, 0.45, 0.8)), PhaseSpec((0.1, 0.3), (0.45, 0.8)))
        solve = PoissonService.solve

        def failing_solve(self, system, omega1, check=True):
            if system.fingerprint != initial.fingerprint():
                raise PoissonError("stream function residual above contract", 1.0)
            return solve(self, system, omega1, check)

        monkeypatch.setattr(MeshService, "remesh_check", lambda self, state, maps, period, config=None: proposal)
        monkeypatch.setattr(PoissonService, "solve", failing_solve)

        with pytest.raises(PoissonError):
            StepperService().run(config)

        assert (output_dir / FAILURE_FILE).exists()
        header, (u1, omega1, psi1) = Repository().load_checkpoint(Repository().latest_checkpoint())
        assert header.step == 0
        assert header.r_spec == initial.r.spec
        assert header.z_spec == initial.z.spec
        np.testing.assert_allclose(u1, FieldService().init_case(1, initial).u1, rtol=0.0, atol=1e-14)
        assert not np.any(omega1)

#!/usr/bin/env python3
from __future__ import annotations

import numpy as np
import pytest

from swirl_lab.common.utils import DomainError
from swirl_lab.services import DiagnosticsService, DiscretizationService, FieldService
from swirl_lab.services.dto import FieldState, Parity, VelocityGrids


def velocity_grids(shape, **components):
    zero = np.zeros(shape)
    fields = {name: components.get(name, zero) for name in ("ur", "uz", "utheta", "psi1r", "psi1z", "u1r", "u1z")}
    return VelocityGrids(**fields)


def rotation(r, z):
    r = np.asarray(r, dtype=float)
    return np.zeros_like(r), r.copy(), np.zeros_like(r)


def test_record_of_initial_state(uniform_maps):
    maps = uniform_maps(32)
    state = FieldService().init_case(1, maps)
    velocity = DiscretizationService().velocity_from_psi(state.psi1, state.u1, maps)

    record = DiagnosticsService().record(state, maps, velocity, 0.0, 0.0)

    assert record.step == 0
    assert record.u1_max == float(np.max(np.abs(state.u1)))
    assert record.w1_max == 0.0
    assert record.w_max > 0.0
    assert record.energy > 0.0
    assert record.R_over_Z == pytest.approx(record.R / record.Z)
    assert record.alignment == 0.0
    assert record.u_max == pytest.approx(float(np.max(np.abs(velocity.utheta))))


def test_zero_velocity_has_no_energy(uniform_maps):
    assert DiagnosticsService().kinetic_energy(velocity_grids((33, 33)), uniform_maps(32)) == 0.0


def test_energy_of_solid_rotation(uniform_maps, stretched_maps):
    maps = uniform_maps(256)
    r, _ = maps.meshgrid()

    assert DiagnosticsService().kinetic_energy(velocity_grids(r.shape, utheta=r), maps) == pytest.approx(
        1.0 / 16.0, abs=1e-6)

    errors = []
    for n in (32, 64, 128):
        maps = stretched_maps(n)
        r, _ = maps.meshgrid()
        errors.append(abs(DiagnosticsService().kinetic_energy(velocity_grids(r.shape, utheta=r), maps) - 1.0 / 16.0))
    assert errors[0] / errors[1] >= 3.5
    assert errors[1] / errors[2] >= 3.5


def test_bkm_of_constant_vorticity():
    bkm = 0.0
    times = np.linspace(0.0, 2.0, 11)
    for t_prev, t in zip(times[:-1], times[1:]):
        bkm = DiagnosticsService.bkm_accumulate(bkm, t_prev, 3.0, t, 3.0)

    assert bkm == pytest.approx(6.0, rel=1e-14)


def test_bkm_single_step():
    assert DiagnosticsService.bkm_accumulate(1.0, 0.5, 2.0, 0.75, 4.0) == pytest.approx(1.75)


def test_bkm_rejects_backward_time():
    with pytest.raises(DomainError):
        DiagnosticsService.bkm_accumulate(0.0, 1.0, 1.0, 0.5, 1.0)


def test_track_maximum_of_isolated_peak(uniform_maps):
    maps = uniform_maps(32)
    field = np.zeros((33, 33))
    field[5, 7] = 1.0

    peak = DiagnosticsService.track_maximum(field, maps)

    assert (peak.i, peak.j) == (5, 7)
    assert peak.value == 1.0
    assert peak.R == pytest.approx(maps.r.values[5], abs=1e-12)
    assert peak.Z == pytest.approx(maps.z.values[7], abs=1e-12)


def test_track_maximum_of_paraboloid(uniform_maps, stretched_maps):
    for maps in (uniform_maps(32), stretched_maps(64)):
        r, z = maps.meshgrid()
        peak = DiagnosticsService.track_maximum(1.0 - (r - 0.3) ** 2 - (z - 0.2) ** 2, maps)

        assert peak.R == pytest.approx(0.3, abs=1e-10)
        assert peak.Z == pytest.approx(0.2, abs=1e-10)
        assert abs(peak.R_grid - 0.3) < 0.05


def test_cross_sections_of_separable_field(uniform_maps):
    maps = uniform_maps(64)
    r, z = maps.meshgrid()
    u1 = np.cos(np.pi * r ** 2) * np.sin(2.0 * np.pi * z)
    psi1 = (1.0 - r ** 2) ** 2 * np.sin(2.0 * np.pi * z)
    R, Z = 0.3, 0.1

    sections = DiagnosticsService().cross_sections(FieldState(u1, np.zeros_like(u1), psi1), maps, R, Z)

    grid_r = maps.r.values
    grid_z = maps.z.values
    np.testing.assert_allclose(sections.u1_along_r, np.cos(np.pi * grid_r ** 2) * np.sin(2.0 * np.pi * Z), atol=1e-4)
    np.testing.assert_allclose(sections.u1_along_z, np.cos(np.pi * R ** 2) * np.sin(2.0 * np.pi * grid_z), atol=1e-4)
    np.testing.assert_allclose(sections.psi1z_along_r,
                               (1.0 - grid_r ** 2) ** 2 * 2.0 * np.pi * np.cos(2.0 * np.pi * Z), atol=5e-3)
    np.testing.assert_allclose(sections.psi1z_along_z,
                               (1.0 - R ** 2) ** 2 * 2.0 * np.pi * np.cos(2.0 * np.pi * grid_z), atol=5e-3)


def test_spectrum_of_single_mode(uniform_maps):
    maps = uniform_maps(64)
    r, _ = maps.meshgrid()
    eta = np.broadcast_to(maps.z.coordinates, r.shape)
    field = np.cos(np.pi * r ** 2) * np.sin(10.0 * np.pi * eta)

    for cutoff in (False, True):
        spectrum = DiagnosticsService().spectrum_z(field, maps, 0.25, cutoff=cutoff)
        assert int(np.argmax(spectrum)) == 5


def test_spectrum_of_constant(uniform_maps):
    maps = uniform_maps(256)
    field = np.ones((257, 257))

    plain = DiagnosticsService().spectrum_z(field, maps, 0.5, cutoff=False, z_parity=Parity.Even)
    assert plain[0] == pytest.approx(1.0)
    assert np.max(plain[1:]) < 1e-12

    tapered = DiagnosticsService().spectrum_z(field, maps, 0.5, cutoff=True, z_parity=Parity.Even)
    assert int(np.argmax(tapered)) == 0
    assert np.max(tapered[30:]) < 1e-2 * tapered[0]


def test_streamline_of_zero_field():
    def still(r, z):
        r = np.asarray(r, dtype=float)
        return np.zeros_like(r), np.zeros_like(r), np.zeros_like(r)

    line = DiagnosticsService.trace_streamline(still, (0.5, 0.1, 0.0), 0.1, 5)

    assert line.points.shape == (6, 5)
    np.testing.assert_array_equal(line.points[:, 1:], np.tile(line.points[0, 1:], (6, 1)))
    assert not line.exited


def test_streamline_of_solid_rotation():
    line = DiagnosticsService.trace_streamline(rotation, (0.6, 0.2, 0.25), 1e-3, 10000)

    assert line.points.shape == (10001, 5)
    assert line.points[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert line.points[0, 2] == pytest.approx(0.6)
    assert np.max(np.abs(line.points[:, 4] - 0.6)) <= 1e-8
    np.testing.assert_array_equal(line.points[:, 3], 0.2)
    assert not line.exited and not line.truncated


def test_streamline_exits_domain():
    def outward(r, z):
        r = np.asarray(r, dtype=float)
        return np.ones_like(r), np.zeros_like(r), np.zeros_like(r)

    line = DiagnosticsService.trace_streamline(outward, (0.5, 0.1, 0.0), 0.03, 1000)

    assert line.exited
    assert len(line.points) == 17
    assert line.points[-1, 4] <= 1.0


def test_velocity_sampler_matches_grids(uniform_maps):
    maps = uniform_maps(32)
    state = FieldService().init_case(1, maps)
    velocity = DiscretizationService().velocity_from_psi(state.psi1, state.u1, maps)
    sampler = DiagnosticsService().velocity_sampler(velocity, maps)

    r = maps.r.values[8]
    z = maps.z.values[5]
    ur, utheta, uz = sampler(np.array([r]), np.array([z]))
    assert utheta[0] == pytest.approx(velocity.utheta[8, 5], rel=1e-9)
    assert ur[0] == pytest.approx(velocity.ur[8, 5], abs=1e-12)
    assert uz[0] == pytest.approx(velocity.uz[8, 5], abs=1e-12)

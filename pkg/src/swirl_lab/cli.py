#!/usr/bin/env python3
from __future__ import annotations

import argparse
import sys
from argparse import ArgumentParser
from itertools import combinations
from pathlib import Path
from typing import Sequence

import attrs
import numpy as np

from .common.utils import DomainError, NumericalError, StrPath, SwirlIOError, SwirlLabException
from .repository import apply_overrides
from .repository.dao import *
from .services import CASE1_PRESETS, CASE4_PRESETS
from .services.dto import *
from .swirl_lab import SwirlLab

__all__ = [
    "APP",
    "diagnose",
    "fit",
    "main",
    "rescale",
    "resolution_study",
    "resume",
    "run",
    "streamline",
    "toys"
]

APP: SwirlLab | None = None

RESUME_KEYS = ("t_end", "max_steps", "diag_every", "snapshot_every", "checkpoint_every", "progress_every",
               "residual_check_every", "snapshot_times", "debug", "verbose")
FIT_PRESETS = {"case1": CASE1_PRESETS, "case4": CASE4_PRESETS}
PROFILE_FIELDS = ("u1", "omega1", "psi1")
TOY_EXPERIMENTS = ("all", "burgers", "growth", "riccati")


def main(args: Sequence[str]) -> int:
    global APP

    args = _parse_args(args)
    APP = None
    try:
        APP = SwirlLab()

        if args.command == "run":
            _run(args)
        elif args.command == "resume":
            resume(args.run_dir, _overrides(args, RESUME_KEYS))
        elif args.command == "diagnose":
            _output(args, args.run_dir)
            diagnose(args.run_dir, args.export_full)
        elif args.command == "fit":
            _output(args, args.run_dir)
            fit(args.run_dir, args.preset, tuple(args.window) if args.window else None)
        elif args.command == "rescale":
            _output(args, ".")
            rescale(args.snapshots, args.field, args.m, tuple(args.xi), tuple(args.zeta), not args.raw)
        elif args.command == "resolution-study":
            _output(args, ".")
            resolution_study(args.snapshots, args.reference, args.tolerance)
        elif args.command == "streamline":
            _output(args, ".")
            streamline(args.snapshot, tuple(args.seed), args.ds, args.steps)
        elif args.command == "toys":
            _output(args, ".")
            toys(args.experiment, args.p, args.times)
    except SwirlLabException as e:
        print(f"{e.__class__.__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"{e.__class__.__name__}: {e}", file=sys.stderr)
        return SwirlIOError.exit_code
    else:
        return 0
    finally:
        del APP


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _parse_args(args: Sequence[str]) -> argparse.Namespace:
    description = ("Adaptive-mesh solver and analysis lab for finite-time blow-up of the axisymmetric Euler "
                   "equations with swirl.")
    epilog = "Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error."

    main_parser = ArgumentParser("swirl-lab", description=description, epilog=epilog)
    main_parser.add_argument("-o", "--output-dir",
                             help="folder that receives the results. relative paths are resolved against "
                                  "$SWIRL_LAB_OUTPUT_ROOT or the current directory")

    command_parsers = main_parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    run_parser = command_parsers.add_parser("run", epilog=epilog, help="run a simulation")
    run_parser.add_argument("-c", "--config", help="key=value configuration file", type=Path)
    for a in attrs.fields(SimConfig):
        if a.name == "output_dir":
            continue
        if a.type in (bool, "bool"):
            run_parser.add_argument(_flag(a.name), const="true", dest=a.name, metavar="BOOL", nargs="?")
        else:
            run_parser.add_argument(_flag(a.name), dest=a.name, metavar="VALUE")

    resume_parser = command_parsers.add_parser("resume", epilog=epilog,
                                               help="continue a run from its latest checkpoint")
    resume_parser.add_argument("run_dir", metavar="RUN_DIR", type=Path)
    for name in RESUME_KEYS:
        if name in ("debug", "verbose"):
            resume_parser.add_argument(_flag(name), const="true", dest=name, metavar="BOOL", nargs="?")
        else:
            resume_parser.add_argument(_flag(name), dest=name, metavar="VALUE")

    diagnose_parser = command_parsers.add_parser("diagnose", epilog=epilog,
                                                 help="recompute diagnostics and mesh effectiveness from snapshots")
    diagnose_parser.add_argument("run_dir", metavar="RUN_DIR", type=Path)
    diagnose_parser.add_argument("--export-full", action="store_true",
                                 help="also write every snapshot extended to r in [-1, 1], z in [-1/2, 1/2]")

    fit_parser = command_parsers.add_parser("fit", epilog=epilog, help="fit blow-up scaling laws to diagnostics")
    fit_parser.add_argument("run_dir", metavar="RUN_DIR", type=Path)
    fit_parser.add_argument("-p", "--preset", choices=tuple(FIT_PRESETS), default="case1",
                            help="set of fits to perform. defaults to 'case1'")
    fit_parser.add_argument("-w", "--window", metavar=("T1", "T2"), nargs=2, type=float,
                            help="fit window shared by all fits. defaults to the preset windows")

    rescale_parser = command_parsers.add_parser("rescale", epilog=epilog,
                                                help="sample snapshots in self-similar variables")
    rescale_parser.add_argument("snapshots", metavar="SNAPSHOT", nargs="+", type=Path)
    rescale_parser.add_argument("-f", "--field", choices=PROFILE_FIELDS, default="u1",
                                help="field to rescale. defaults to 'u1'")
    rescale_parser.add_argument("-m", type=int, default=101, help="samples per axis. defaults to 101")
    rescale_parser.add_argument("--xi", metavar=("MIN", "MAX"), nargs=2, type=float, default=(-1.0, 1.0))
    rescale_parser.add_argument("--zeta", metavar=("MIN", "MAX"), nargs=2, type=float, default=(0.0, 2.0))
    rescale_parser.add_argument("--raw", action="store_true", help="do not normalize by the sup norm")

    study_parser = command_parsers.add_parser("resolution-study", epilog=epilog,
                                              help="errors and convergence orders against a reference snapshot")
    study_parser.add_argument("snapshots", metavar="SNAPSHOT", nargs="+", type=Path)
    study_parser.add_argument("-r", "--reference", required=True, type=Path)
    study_parser.add_argument("--tolerance", default=1e-12, type=float,
                              help="relative tolerance on snapshot times. defaults to 1e-12")

    streamline_parser = command_parsers.add_parser("streamline", epilog=epilog,
                                                   help="trace a streamline through a snapshot's velocity")
    streamline_parser.add_argument("snapshot", metavar="SNAPSHOT", type=Path)
    streamline_parser.add_argument("-s", "--seed", metavar=("R", "Z", "THETA"), nargs=3, required=True, type=float,
                                   help="starting point, THETA in turns")
    streamline_parser.add_argument("--ds", default=1e-4, type=float, help="arc step. defaults to 1e-4")
    streamline_parser.add_argument("--steps", default=10000, type=int, help="step limit. defaults to 10000")

    toys_parser = command_parsers.add_parser("toys", epilog=epilog,
                                             help="Riccati and Burgers blow-up experiments")
    toys_parser.add_argument("experiment", choices=TOY_EXPERIMENTS, default="all", nargs="?")
    toys_parser.add_argument("-p", default=2.0, type=float, help="norm index for growth ratios. defaults to 2")
    toys_parser.add_argument("--times", default=(0.5, 0.8, 0.9, 0.95, 0.99), nargs="+", type=float,
                             help="times for growth ratios")

    return main_parser.parse_args(args)


def _overrides(args: argparse.Namespace, keys: Sequence[str]) -> dict[str, str]:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _output(args: argparse.Namespace, default: StrPath) -> None:
    APP.repository.set_output_dir(args.output_dir or default)


def _run(args: argparse.Namespace) -> None:
    config = APP.repository.load_config(args.config) if args.config else SimConfig()
    keys = tuple(a.name for a in attrs.fields(SimConfig) if a.name != "output_dir")
    config = apply_overrides(config, _overrides(args, keys))
    _output(args, config.output_dir)
    run(config)


def run(config: SimConfig) -> RunResult:
    APP.repository.begin("run", config)
    try:
        result = APP.stepper_service.run(config)
    except NumericalError as e:
        APP.repository.finish(getattr(e, "reason", TerminationReason.Failed.value),
                              notes=[f"{e.__class__.__name__}: {e}"])
        raise
    APP.repository.finish(result.termination, result.steps)
    print(f"Done. {result.termination.value} after {result.steps} steps at t={result.state.t!r}.")
    return result


def resume(run_dir: StrPath, overrides: dict[str, str] | None = None) -> RunResult:
    APP.repository.set_output_dir(run_dir)
    overrides = overrides or {}
    config = apply_overrides(APP.repository.load_run_config(), overrides)
    APP.repository.begin("resume", config)
    values = {k: getattr(config, k) for k in overrides}
    try:
        result = APP.stepper_service.resume(run_dir, values)
    except NumericalError as e:
        APP.repository.finish(getattr(e, "reason", TerminationReason.Failed.value),
                              notes=[f"{e.__class__.__name__}: {e}"])
        raise
    APP.repository.finish(result.termination, result.steps,
                          notes=[f"resumed at step {result.state.step - result.steps}"])
    print(f"Done. {result.termination.value} after {result.steps} more steps at t={result.state.t!r}.")
    return result


def diagnose(run_dir: StrPath, export_full: bool = False) -> Path:
    APP.repository.begin("diagnose")
    snapshots = APP.repository.list_snapshots(run_dir)
    if not snapshots:
        raise SwirlIOError(f"no snapshots under '{run_dir}'")

    mem_columns = tuple(f"mem_{axis}_{name}" for name in PROFILE_FIELDS for axis in ("rho", "eta"))
    rows = []
    bkm = 0.0
    previous: tuple[float, float] | None = None
    for path in snapshots:
        snapshot = APP.analysis_service.load_snapshot(path)
        state, maps = snapshot.state, snapshot.maps
        w = APP.diagnostics_service.vorticity_max(state, maps)
        if previous is not None:
            bkm = APP.diagnostics_service.bkm_accumulate(bkm, previous[0], previous[1], state.t, w)
        previous = (state.t, w)
        velocity = APP.discretization_service.velocity_from_psi(state.psi1, state.u1, maps)
        record = APP.diagnostics_service.record(state, maps, velocity, bkm, float("nan"))

        mems = []
        for name in PROFILE_FIELDS:
            try:
                report = APP.mesh_service.mesh_effectiveness(getattr(state, name), maps)
                mems.extend((report.mem_rho, report.mem_eta))
            except DomainError:
                mems.extend((float("nan"), float("nan")))
        rows.append([getattr(record, c) for c in DiagnosticsRecord.columns()] + mems)

        if export_full:
            full = APP.field_service.extend_full_domain(state, maps)
            APP.repository.save_arrays(f"full-{path.stem}.npz", r=full.r, z=full.z, u1=full.u1,
                                       omega1=full.omega1, psi1=full.psi1, t=np.array(state.t))

    result = APP.repository.write_table("diagnose.csv", DiagnosticsRecord.columns() + mem_columns, rows)
    APP.repository.finish(TerminationReason.Completed, len(rows))
    print(f"[C] {result}")
    return result


def fit(run_dir: StrPath, preset: str = "case1", window: tuple[float, float] | None = None) -> list[FitResult]:
    APP.repository.begin("fit")
    records = APP.repository.load_diagnostics(run_dir)
    results = APP.analysis_service.fit_report(records, FIT_PRESETS[preset], window)
    path = APP.repository.write_table(f"fits-{preset}.csv", FitResult.columns(), (r.row() for r in results))
    APP.repository.finish(TerminationReason.Completed, len(results))
    for r in results:
        print(f"{r.quantity}: slope={r.slope:.6e} intercept={r.intercept:.6e} T={r.T_est:.10f} "
              f"R^2={r.r_square:.6f} ({r.samples} samples in [{r.window[0]:.10f}, {r.window[1]:.10f}])")
    print(f"[C] {path}")
    return results


def rescale(snapshots: Sequence[StrPath], field: str = "u1", m: int = 101,
            xi_range: tuple[float, float] = (-1.0, 1.0), zeta_range: tuple[float, float] = (0.0, 2.0),
            normalize: bool = True) -> list[RescaledProfile]:
    APP.repository.begin("rescale")
    profiles = []
    for path in snapshots:
        snapshot = APP.analysis_service.load_snapshot(path)
        peak = APP.diagnostics_service.track_maximum(snapshot.state.u1, snapshot.maps)
        profile = APP.analysis_service.rescale_profile(getattr(snapshot.state, field), snapshot.maps, peak.R,
                                                       peak.Z, xi_range, zeta_range, m, normalize,
                                                       t=snapshot.state.t)
        rows = ((x, z, profile.values[i, j]) for i, x in enumerate(profile.xi) for j, z in enumerate(profile.zeta))
        created = APP.repository.write_table(f"profile-{Path(path).stem}.csv", ("xi", "zeta", field), rows)
        print(f"[C] {created} (R={profile.R:.6e} Z={profile.Z:.6e} clipped={profile.clipped_fraction:.3f})")
        profiles.append(profile)

    if len(profiles) > 1:
        distances = [(Path(snapshots[a]).stem, Path(snapshots[b]).stem,
                      APP.analysis_service.profile_distance(profiles[a], profiles[b]))
                     for a, b in combinations(range(len(profiles)), 2)]
        created = APP.repository.write_table("profile-distances.csv", ("first", "second", "distance"), distances)
        for first, second, distance in distances:
            print(f"{first} {second}: {distance:.6e}")
        print(f"[C] {created}")
    APP.repository.finish(TerminationReason.Completed, len(profiles))
    return profiles


def resolution_study(snapshots: Sequence[StrPath], reference: StrPath, tolerance: float = 1e-12) -> ErrorTable:
    APP.repository.begin("resolution-study")
    runs = [APP.analysis_service.load_snapshot(p) for p in snapshots]
    table = APP.analysis_service.resolution_study(runs, APP.analysis_service.load_snapshot(reference), tolerance)
    path = APP.repository.write_table("errors.csv", ("variable", "norm", "n", "error", "order"),
                                      ((r.variable, r.norm, r.n, r.error, r.order) for r in table.rows))
    APP.repository.finish(TerminationReason.Completed, len(table.rows))
    for r in table.rows:
        order = "" if r.order is None else f" order={r.order:.3f}"
        print(f"{r.variable} {r.norm} n={r.n}: {r.error:.6e}{order}")
    print(f"[C] {path}")
    return table


def streamline(snapshot: StrPath, seed: tuple[float, float, float], ds: float = 1e-4,
               steps: int = 10000) -> Streamline:
    APP.repository.begin("streamline")
    loaded = APP.analysis_service.load_snapshot(snapshot)
    velocity = APP.discretization_service.velocity_from_psi(loaded.state.psi1, loaded.state.u1, loaded.maps)
    sampler = APP.diagnostics_service.velocity_sampler(velocity, loaded.maps)
    line = APP.diagnostics_service.trace_streamline(sampler, seed, ds, steps)
    path = APP.repository.write_table("streamline.csv", ("s", "x", "y", "z", "r"), line.points.tolist())
    notes = ["left the cylinder"] if line.exited else ["non-finite velocity"] if line.truncated else []
    APP.repository.finish(TerminationReason.Completed, len(line.points), notes)
    print(f"[C] {path}")
    return line


def toys(experiment: str = "all", p: float = 2.0, times: Sequence[float] = (0.5, 0.8, 0.9, 0.95, 0.99)) -> None:
    APP.repository.begin("toys")
    service = APP.toys_service
    problem = BurgersProblem(p=p)
    if experiment in ("all", "riccati"):
        rows = [(t, *service.riccati(t)) for t in (0.0, 0.25, 0.5, 0.75, 0.9)]
        print(f"[C] {APP.repository.write_table('riccati.csv', ('t', 'u', 'v_ratio'), rows)}")
        rows = [(eps, service.riccati_perturbed_blowup(eps)) for eps in (0.1, 0.05, 0.025)]
        print(f"[C] {APP.repository.write_table('riccati-blowup.csv', ('eps', 'T_eps'), rows)}")
    if experiment in ("all", "burgers"):
        t_star = service.t_star(problem)
        rows = [(0.0, t_star, service.characteristic_blowup_time(problem))]
        for eps in (0.1, 0.05, 0.025):
            perturbed = problem.copy(eps=eps)
            rows.append((eps, service.blowup_time(perturbed), service.characteristic_blowup_time(perturbed)))
        print(f"T* = {t_star!r}")
        print(f"[C] {APP.repository.write_table('burgers-blowup.csv', ('eps', 'T_eps', 'T_characteristic'), rows)}")
    if experiment in ("all", "growth"):
        records = service.growth_table(problem, times, p)
        for r in records:
            print(f"t={r.t}: ratio={r.ratio:.6f} bound={r.bound:.6f}")
        print(f"[C] {APP.repository.write_table('growth.csv', GrowthRecord.columns(), (r.row() for r in records))}")
    APP.repository.finish(TerminationReason.Completed)

#!/usr/bin/env python3
from __future__ import annotations

import csv
import hashlib
import os
import zipfile
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

import attrs
import numpy as np
from cattrs.preconf.json import JsonConverter

from .dao import *
from ..common.entity import json_converter, precise_converter, text_converter
from ..common.singleton import Singleton
from ..common.utils import AnyPath, CheckpointError, checksum, ConfigError, expand_path, format_float, \
    json_dump, json_dumps, json_loads, mkdir, SwirlIOError
from ..constants import *

__all__ = [
    "apply_overrides",
    "emit_config",
    "parse_config",
    "parse_overrides",
    "Repository"
]


def parse_config(text: str) -> SimConfig:
    """Parse key=value lines into a SimConfig; '#' starts a comment."""
    attrs.resolve_types(SimConfig)
    fields = attrs.fields_dict(SimConfig)
    values: dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        key = key.strip()
        if not separator:
            raise ConfigError(f"line {number}: expected 'key=value', got '{line}'")
        if key not in fields:
            raise ConfigError(f"line {number}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {number}: duplicate key '{key}'")
        try:
            values[key] = text_converter.structure(value.strip(), fields[key].type)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"line {number}: invalid value for '{key}': {e}") from e
    try:
        return SimConfig(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def parse_overrides(values: dict[str, Any]) -> dict[str, Any]:
    """Structure flag-style overrides (text or typed values) against the SimConfig fields."""
    attrs.resolve_types(SimConfig)
    fields = attrs.fields_dict(SimConfig)
    overrides = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"unknown key '{key}'")
        try:
            overrides[key] = text_converter.structure(value if isinstance(value, (bool, int, float, tuple))
                                                      else str(value).strip(), fields[key].type)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for '{key}': {e}") from e
    return overrides


def apply_overrides(config: SimConfig, values: dict[str, Any]) -> SimConfig:
    try:
        return config.copy(**parse_overrides(values))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, tuple):
        return ",".join(format_float(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def emit_config(config: SimConfig, full: bool = False) -> str:
    """Inverse of parse_config; only keys that differ from their defaults unless full is set."""
    lines = []
    for a in attrs.fields(SimConfig):
        value = getattr(config, a.name)
        if full or value != a.default:
            lines.append(f"{a.name}={_format_value(value)}")
    return "\n".join(lines) + "\n" if lines else ""


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return format_float(value)
    return _format_value(value)


def _pack_fields(arrays: Sequence[np.ndarray]) -> bytes:
    return b"".join(np.asarray(a, dtype="<f8").tobytes(order="F") for a in arrays)


def _unpack_fields(payload: bytes, shape: tuple[int, int], count: int = 3) -> list[np.ndarray]:
    values = np.frombuffer(payload, dtype="<f8")
    size = shape[0] * shape[1]
    if values.size != count * size:
        raise CheckpointError(f"field payload holds {values.size} values, expected {count * size}")
    return [values[k * size:(k + 1) * size].reshape(shape, order="F").astype(float) for k in range(count)]


class Repository(metaclass=Singleton):
    def __init__(self):
        self.converter: JsonConverter = json_converter
        self.inventory: dict[str, Path] = {}
        self.manifest: RunManifest | None = None
        self.output_dir: Path = Path(DEFAULT_OUTPUT_ROOT)

    def get_output_dir(self) -> Path:
        return self.output_dir

    def set_output_dir(self, output_dir: AnyPath) -> None:
        path = Path(os.fsdecode(output_dir))
        if not path.is_absolute():
            path = Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT), path)
        self.output_dir = expand_path(path)
        try:
            mkdir(self.output_dir)
        except OSError as e:
            raise SwirlIOError(f"cannot create output directory '{self.output_dir}': {e}") from e

    def _register(self, path: Path) -> Path:
        self.inventory[path.relative_to(self.output_dir).as_posix()] = path
        return path

    def _path(self, *parts: str) -> Path:
        path = Path(self.output_dir, *parts)
        mkdir(path.parent)
        return path

    # configuration

    def save_config(self, config: SimConfig) -> Path:
        path = self._path(CONFIG_FILE)
        path.write_text(emit_config(config))
        return self._register(path)

    @staticmethod
    def load_config(path: AnyPath) -> SimConfig:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config '{os.fsdecode(path)}': {e}") from e
        return parse_config(text)

    def load_run_config(self, run_dir: AnyPath | None = None) -> SimConfig:
        return self.load_config(Path(run_dir or self.output_dir, CONFIG_FILE))

    # diagnostics

    def write_diagnostics(self, records: Iterable[DiagnosticsRecord], append: bool = False) -> Path:
        path = self._path(DIAGNOSTICS_FILE)
        fresh = not append or not path.exists()
        with open(path, "w" if fresh else "a", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            if fresh:
                writer.writerow(DiagnosticsRecord.columns())
            for record in records:
                writer.writerow([_format_cell(getattr(record, c)) for c in DiagnosticsRecord.columns()])
        return self._register(path)

    def load_diagnostics(self, path: AnyPath | None = None) -> list[DiagnosticsRecord]:
        path = Path(path) if path is not None else Path(self.output_dir, DIAGNOSTICS_FILE)
        if path.is_dir():
            path = Path(path, DIAGNOSTICS_FILE)
        try:
            with open(path, newline="") as f:
                return [text_converter.structure(row, DiagnosticsRecord) for row in csv.DictReader(f)]
        except OSError as e:
            raise SwirlIOError(f"cannot read diagnostics '{path}': {e}") from e

    def write_table(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._path(name)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_format_cell(v) for v in row])
        return self._register(path)

    def save_arrays(self, name: str, **arrays: np.ndarray) -> Path:
        path = self._path(name)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        return self._register(path)

    # snapshots

    def save_snapshot(self, name: str, header: SnapshotHeader, fields: Sequence[np.ndarray]) -> Path:
        path = self._path(SNAPSHOTS_DIR, name)
        lines = [
            f"n1={header.n1}",
            f"n2={header.n2}",
            f"t={format_float(header.t)}",
            f"step={header.step}",
            f"case={header.case}"
        ]
        for prefix, spec in (("r", header.r_spec), ("z", header.z_spec)):
            lines.append(f"{prefix}_nodes={_format_value(spec.physical_nodes)}")
            lines.append(f"{prefix}_fractions={_format_value(spec.fraction_nodes)}")
            lines.append(f"{prefix}_transition={format_float(spec.transition_fraction)}")
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as archive:
            archive.writestr(HEADER_TEXT_MEMBER, "\n".join(lines) + "\n")
            archive.writestr(FIELDS_MEMBER, _pack_fields(fields))
        return self._register(path)

    @staticmethod
    def load_snapshot(path: AnyPath) -> tuple[SnapshotHeader, list[np.ndarray]]:
        try:
            with zipfile.ZipFile(path) as archive:
                text = archive.read(HEADER_TEXT_MEMBER).decode()
                payload = archive.read(FIELDS_MEMBER)
        except (OSError, KeyError, zipfile.BadZipFile) as e:
            raise SwirlIOError(f"cannot read snapshot '{os.fsdecode(path)}': {e}") from e
        values = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        try:
            specs = {prefix: PhaseSpec(values[f"{prefix}_nodes"], values[f"{prefix}_fractions"],
                                       values[f"{prefix}_transition"]) for prefix in ("r", "z")}
            header = SnapshotHeader(n1=int(values["n1"]), n2=int(values["n2"]), t=float(values["t"]),
                                    step=int(values["step"]), case=int(values["case"]), r_spec=specs["r"],
                                    z_spec=specs["z"])
        except (KeyError, ValueError) as e:
            raise SwirlIOError(f"snapshot '{os.fsdecode(path)}' has a malformed header: {e}") from e
        return header, _unpack_fields(payload, (header.n2 + 1, header.n1 + 1))

    def list_snapshots(self, run_dir: AnyPath | None = None) -> list[Path]:
        directory = Path(run_dir or self.output_dir, SNAPSHOTS_DIR)
        try:
            return sorted(p for p in directory.iterdir() if p.suffix == ".zip")
        except FileNotFoundError:
            return []

    # checkpoints

    def save_checkpoint(self, header: CheckpointHeader, fields: Sequence[np.ndarray]) -> Path:
        path = self._path(CHECKPOINTS_DIR, f"checkpoint-{header.step:09d}.zip")
        payload = _pack_fields(fields)
        header = header.copy(checksum=hashlib.sha256(payload).hexdigest(), version=CHECKPOINT_VERSION)
        text = json_dumps(precise_converter.unstructure(header), pretty=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as archive:
            archive.writestr(HEADER_JSON_MEMBER, text)
            archive.writestr(FIELDS_MEMBER, payload)
        return self._register(path)

    @staticmethod
    def load_checkpoint(path: AnyPath) -> tuple[CheckpointHeader, list[np.ndarray]]:
        try:
            with zipfile.ZipFile(path) as archive:
                raw = json_loads(archive.read(HEADER_JSON_MEMBER).decode())
                payload = archive.read(FIELDS_MEMBER)
        except (OSError, KeyError, ValueError, zipfile.BadZipFile) as e:
            raise CheckpointError(f"cannot read checkpoint '{os.fsdecode(path)}': {e}") from e
        if raw.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"checkpoint version {raw.get('version')} is not supported")
        try:
            header = precise_converter.structure(raw, CheckpointHeader)
        except Exception as e:
            raise CheckpointError(f"checkpoint '{os.fsdecode(path)}' has a malformed header: {e}") from e
        if hashlib.sha256(payload).hexdigest() != header.checksum:
            raise CheckpointError(f"checkpoint '{os.fsdecode(path)}' fails its checksum")
        shape = (header.config.n2 + 1, header.config.n1 + 1)
        return header, _unpack_fields(payload, shape)

    def latest_checkpoint(self, run_dir: AnyPath | None = None) -> Path:
        directory = Path(run_dir or self.output_dir, CHECKPOINTS_DIR)
        try:
            checkpoints = sorted(p for p in directory.iterdir() if p.suffix == ".zip")
        except FileNotFoundError:
            checkpoints = []
        if not checkpoints:
            raise CheckpointError(f"no checkpoint found under '{directory}'")
        return checkpoints[-1]

    # run records

    def save_failure(self, record: FailureRecord) -> Path:
        path = self._path(FAILURE_FILE)
        json_dump(self.converter.unstructure(record), path, pretty=True)
        return self._register(path)

    def begin(self, command: str, config: SimConfig | None = None) -> RunManifest:
        self.inventory = {}
        self.manifest = RunManifest(command=command, version=VERSION, started=_now(), config=config)
        return self.manifest

    def finish(self, termination: TerminationReason | str, steps: int = 0,
               notes: Iterable[str] = ()) -> Path:
        if self.manifest is None:
            self.begin("unknown")
        if isinstance(termination, TerminationReason):
            termination = termination.value
        files = {name: checksum(path) for name, path in sorted(self.inventory.items()) if path.exists()}
        manifest = self.manifest.copy(finished=_now(), termination=termination, steps=steps, files=files,
                                      notes=list(notes))
        path = self._path(MANIFEST_FILE)
        json_dump(self.converter.unstructure(manifest), path, pretty=True)
        self.manifest = None
        return path

    def load_manifest(self, run_dir: AnyPath | None = None) -> RunManifest:
        path = Path(run_dir or self.output_dir, MANIFEST_FILE)
        try:
            return self.converter.structure(json_loads(path.read_text()), RunManifest)
        except OSError as e:
            raise SwirlIOError(f"cannot read manifest '{path}': {e}") from e


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")

#!/usr/bin/env python3
from __future__ import annotations

import hashlib
import os
import sys
from pathlib import Path
from typing import AnyStr

if sys.implementation.name == "cpython":
    try:
        import ujson
    except ImportError:
        import json

        ujson = None
else:
    import json

    ujson = None

__all__ = [
    "AnalysisError",
    "AnyPath",
    "BlowUpError",
    "CheckpointError",
    "checksum",
    "ConfigError",
    "DegeneratePeakError",
    "DomainError",
    "expand_path",
    "format_float",
    "json_dump",
    "json_dumps",
    "json_loads",
    "MeshConstructionError",
    "mkdir",
    "NumericalError",
    "PoissonError",
    "StrPath",
    "SwirlIOError",
    "SwirlLabException",
    "write"
]

StrPath = os.PathLike[str] | str
AnyPath = AnyStr | os.PathLike[bytes] | os.PathLike[str]


class SwirlLabException(Exception):
    exit_code = 4


class ConfigError(SwirlLabException):
    exit_code = 2


class NumericalError(SwirlLabException):
    exit_code = 3


class AnalysisError(NumericalError):
    pass


class BlowUpError(NumericalError):
    def __init__(self, message: str, reason: str = "non_finite"):
        super().__init__(message)
        self.reason = reason


class DegeneratePeakError(NumericalError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class MeshConstructionError(NumericalError):
    def __init__(self, message: str, phase: int | None = None):
        super().__init__(message)
        self.phase = phase


class PoissonError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class SwirlIOError(SwirlLabException):
    exit_code = 4


class CheckpointError(SwirlIOError):
    pass


def checksum(path: AnyPath) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def expand_path(path: StrPath) -> Path:
    return Path(os.path.expandvars(os.path.expanduser(path))).absolute()


def format_float(value: float) -> str:
    return repr(float(value))


def json_dump(data: dict, path: AnyPath, pretty: bool = False) -> None:
    data = json_dumps(data, pretty)
    write(path, "w", data)


def json_dumps(data: dict, pretty: bool = False) -> str:
    if ujson is not None:
        if pretty:
            return ujson.dumps(data, escape_forward_slashes=False, indent=2, sort_keys=True)
        else:
            return ujson.dumps(data, escape_forward_slashes=False)
    else:
        if pretty:
            return json.dumps(data, indent=2, sort_keys=True)
        else:
            return json.dumps(data)



def json_loads(data: AnyStr) -> dict:
    if ujson is not None:
        return ujson.loads(data)
    else:
        return json.loads(data)


def mkdir(path: AnyPath) -> Path:
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise SwirlIOError(f"'{path}' exists and is not a directory")
    path.mkdir(parents=True, exist_ok=True)
    return path



def write(path: AnyPath, mode: str, data: AnyStr, newline_at_eof: bool = True) -> None:
    with open(path, mode) as f:
        f.write(data)

        if newline_at_eof and data and data[-1] != "\n":
            f.write("\n")

        f.flush()

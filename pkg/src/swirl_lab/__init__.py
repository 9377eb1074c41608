#!/usr/bin/env python3
from __future__ import annotations

from . import cli, common, repository, services
from .swirl_lab import SwirlLab

__all__ = [
    "cli",
    "common",
    "repository",
    "services",
    "SwirlLab"
]

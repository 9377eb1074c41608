#!/usr/bin/env python3
from __future__ import annotations

from os import getcwd as _getcwd

DEFAULT_OUTPUT_ROOT = _getcwd()

ACCEPTANCE_ENV = "SWIRL_LAB_ACCEPTANCE"
OUTPUT_ROOT_ENV = "SWIRL_LAB_OUTPUT_ROOT"

CHECKPOINT_VERSION = 2
CHECKPOINTS_DIR = "checkpoints"
CONFIG_FILE = "config.txt"
DIAGNOSTICS_FILE = "diagnostics.csv"
FAILURE_FILE = "failure.json"
FIELDS_MEMBER = "fields.bin"
HEADER_JSON_MEMBER = "header.json"
HEADER_TEXT_MEMBER = "header.txt"
MANIFEST_FILE = "manifest.json"
SNAPSHOTS_DIR = "snapshots"
VERSION = "0.1.0"

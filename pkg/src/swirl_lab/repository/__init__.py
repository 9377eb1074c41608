#!/usr/bin/env python3
from __future__ import annotations

from . import dao
from .repository import *

#!/usr/bin/env python3
from __future__ import annotations

from . import dto
from .analysis_service import *
from .diagnostics_service import *
from .discretization_service import *
from .field_service import *
from .mesh_service import *
from .poisson_service import *
from .stepper_service import *
from .toys_service import *

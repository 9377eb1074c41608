#!/usr/bin/env python3
from __future__ import annotations

from .common.utils import AnyPath
from .repository import Repository
from .services import AnalysisService, DiagnosticsService, DiscretizationService, FieldService, MeshService, \
    PoissonService, StepperService, ToysService

__all__ = [
    "SwirlLab"
]


class SwirlLab:
    def __init__(self, output_dir: AnyPath | None = None):
        self.repository: Repository = Repository()
        if output_dir is not None:
            self.repository.set_output_dir(output_dir)

        self.analysis_service: AnalysisService = AnalysisService()
        self.diagnostics_service: DiagnosticsService = DiagnosticsService()
        self.discretization_service: DiscretizationService = DiscretizationService()
        self.field_service: FieldService = FieldService()
        self.mesh_service: MeshService = MeshService()
        self.poisson_service: PoissonService = PoissonService()
        self.stepper_service: StepperService = StepperService()
        self.toys_service: ToysService = ToysService()

#!/usr/bin/env python3
from __future__ import annotations

import os

import numpy as np
import pytest

from swirl_lab.common.singleton import Singleton
from swirl_lab.constants import ACCEPTANCE_ENV
from swirl_lab.repository import Repository
from swirl_lab.repository.dao import PhaseSpec
from swirl_lab.services import MeshService


def pytest_collection_modifyitems(config, items):
    if os.environ.get(ACCEPTANCE_ENV) == "1":
        return
    skip = pytest.mark.skip(reason=f"set {ACCEPTANCE_ENV}=1 to run the desk-scale acceptance runs")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def fresh_services():
    Singleton.reset()
    yield
    Singleton.reset()


@pytest.fixture
def output_dir(tmp_path):
    Repository().set_output_dir(tmp_path)
    return tmp_path


@pytest.fixture
def uniform_maps():
    def build(n1: int, n2: int | None = None):
        return MeshService().build_maps(PhaseSpec(), PhaseSpec(), n1, n2 or n1)

    return build


@pytest.fixture
def stretched_maps():
    def build(n1: int, n2: int | None = None):
        return MeshService().build_maps(PhaseSpec((0.3,), (0.5,)), PhaseSpec((0.2,), (0.5,)), n1, n2 or n1)

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(20230701)

import os
import shutil

os.environ["ZOOPT_OUTPUT_DIR"] = "test_runs"
os.environ["ZOOPT_WORKERS"] = "1"

import pytest
from typer.testing import CliRunner

from ..core.problems import QuadraticProblem
from ..services.experiment_service import ExperimentService
from .helpers import half_norm_problem


@pytest.fixture(name="half_norm")
def half_norm_fixture() -> QuadraticProblem:
    return half_norm_problem(2)


@pytest.fixture(name="service")
def service_fixture() -> ExperimentService:
    yield ExperimentService()

    # Remove the default output folder recursively
    if os.path.exists("test_runs"):
        shutil.rmtree("test_runs")


@pytest.fixture(name="runner")
def runner_fixture() -> CliRunner:
    yield CliRunner()

    if os.path.exists("test_runs"):
        shutil.rmtree("test_runs")

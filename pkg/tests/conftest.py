import math
import time

import pytest

from gelfand.diagnostics import verify_branch
from gelfand.grid import DiskRadial, Rectangle, build_mesh
from gelfand.mfsolver import EIGHT_PI, ContinuationConfig, continue_branch

FULL_RANGE = dict(lambda_start=-10.0, lambda_end=EIGHT_PI - 0.1, e_max=10.0)


class Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def _timed_branch(spec):
    t0 = time.perf_counter()
    branch = continue_branch(build_mesh(spec), ContinuationConfig(**FULL_RANGE))
    return Timed(branch, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def disk_branch_timed():
    return _timed_branch(DiskRadial(0, 2048))


@pytest.fixture(scope="session")
def disk_branch(disk_branch_timed):
    return disk_branch_timed.value


@pytest.fixture(scope="session")
def square_branch():
    return _timed_branch(Rectangle(1.0, 1.0, 96, 96)).value


@pytest.fixture(scope="session")
def disk_report_timed(disk_branch):
    t0 = time.perf_counter()
    report = verify_branch(disk_branch)
    return Timed(report, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def disk_report(disk_report_timed):
    return disk_report_timed.value


@pytest.fixture(scope="session")
def square_report(square_branch):
    return verify_branch(square_branch)


@pytest.fixture(scope="session")
def small_disk_branch():
    """A cheap disk branch for structural tests."""
    mesh = build_mesh(DiskRadial(0, 256))
    return continue_branch(mesh, ContinuationConfig(lambda_start=-10.0, lambda_end=6 * math.pi))

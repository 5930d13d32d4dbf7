import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from trafficflow import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the JIT kernels once so timed tests measure solves, not compiles."""
    kernels.warmup()


@pytest.fixture(scope="session")
def scenario_dir():
    return os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")

import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

# MCMC-heavy properties blow the default deadline; wall time is budgeted
# per test instead.
settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

DATA_DIR = Path(__file__).parent / "data"

os.environ.setdefault("CAUSAL_TREES_THREADS", "1")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR

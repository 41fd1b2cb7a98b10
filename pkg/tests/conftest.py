import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adaptchain.catalog import TaskBinding, default_catalog  # noqa: E402
from adaptchain.workflow import compute_sdm, insurance_claim_workflow  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def claim():
    return insurance_claim_workflow()


@pytest.fixture(scope="session")
def claim_sdm(claim):
    return compute_sdm(claim)


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


def uniform_binding(w, price=2.0, time=5.0, backup_price=3.0, backup_time=4.0):
    return {t: TaskBinding(f"s-{t}", price, time, f"b-{t}", backup_price, backup_time) for t in w.task_ids}


@pytest.fixture
def claim_binding(claim):
    return uniform_binding(claim)

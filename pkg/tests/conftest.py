import os
import sys
from pathlib import Path

import pytest

os.environ.setdefault("DAUT_DEBUG", "1")
sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"


@pytest.fixture
def solver():
    from daut.solver import BuiltinSolver

    return BuiltinSolver(debug=True)


@pytest.fixture(scope="session")
def models_dir():
    return MODELS


@pytest.fixture(scope="session")
def running2():
    from daut.model import load_model

    return load_model(str(MODELS / "running2.da"))


@pytest.fixture(scope="session")
def running2_bad():
    from daut.model import load_model

    return load_model(str(MODELS / "running2-bad.da"))


@pytest.fixture(scope="session")
def running3_model():
    from daut.model import load_model

    return load_model(str(MODELS / "running3.da"))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])

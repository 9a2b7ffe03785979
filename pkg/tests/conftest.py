import sys
from pathlib import Path

import pytest

from planscript.config import default_backends
from planscript.gateway import CallableBackend, EnsembleConfig, Gateway, build_backend
from planscript.planner import TaskRepository

FIXTURES = Path(__file__).parent / "fixtures"
SUITE = FIXTURES / "suite"
sys.path.insert(0, str(FIXTURES))


@pytest.fixture(scope="session")
def repo():
    return TaskRepository.load()


@pytest.fixture(scope="session")
def suite_dir():
    return SUITE


def replay_gateway(use_ensemble=True, strict=True):
    backends = [build_backend(s, SUITE, strict=strict) for s in default_backends()]
    return Gateway(backends, EnsembleConfig(), use_ensemble)


def callable_gateway(respond, specs=None, use_ensemble=True):
    specs = specs or default_backends()
    return Gateway([CallableBackend(s, respond) for s in specs], EnsembleConfig(), use_ensemble)


@pytest.fixture
def replay():
    return replay_gateway


@pytest.fixture
def scripted():
    return callable_gateway


# acceptance criteria report one line each; collected here and echoed at session end
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

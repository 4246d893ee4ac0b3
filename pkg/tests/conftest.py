import pytest
from hypothesis import settings

from wavegal import basis2d as b2
from wavegal import problems

# first calls build curves and jit-compile kernels
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def circle():
    return problems.registry_get("circle-poisson").curve


@pytest.fixture(scope="session")
def circle_aug4(circle):
    return b2.build_augmented_set(3, 4, circle)


# acceptance criteria report one line each at the end of the run
_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])

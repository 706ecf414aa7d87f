import pytest

from fracsub.core import Grid, ProblemSpec, make_coefficient

_ACCEPTANCE = {}


def record_acceptance(key, title, measured, threshold, passed):
    _ACCEPTANCE[key] = (title, measured, threshold, bool(passed))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        title, measured, threshold, passed = _ACCEPTANCE[key]
        token = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{token} criterion {key:>2}: {title} | {measured} | {threshold}")


@pytest.fixture(scope="session")
def default_spec():
    return ProblemSpec()


@pytest.fixture(scope="session")
def default_rho(default_spec):
    return make_coefficient(default_spec)


@pytest.fixture(scope="session")
def default_global(default_spec, default_rho):
    from fracsub.sublinear import solve_global

    return solve_global(default_spec, default_rho, check=False)


@pytest.fixture(scope="session")
def small_spec():
    return ProblemSpec(L=16.0, M=128)


@pytest.fixture(scope="session")
def small_global(small_spec):
    from fracsub.sublinear import solve_global

    return solve_global(small_spec, make_coefficient(small_spec), check=False)


@pytest.fixture
def grid1():
    return Grid(1, 16.0, 2048)

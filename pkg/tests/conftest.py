import pytest

from starindex.cli import load_geometry
from starindex.suites import Context

_criteria = {}


@pytest.fixture(scope="session")
def flat():
    return load_geometry("flat")


@pytest.fixture(scope="session")
def cp1():
    return load_geometry("cp1")


@pytest.fixture(scope="session")
def flat_ctx(flat):
    return Context(flat, N=3, D=8, seed=0)


@pytest.fixture(scope="session")
def cp1_ctx(cp1):
    return Context(cp1, N=3, D=8, seed=0)


@pytest.fixture(scope="session")
def cp1_ctx_small(cp1):
    return Context(cp1, N=3, D=4, seed=0)


@pytest.fixture
def criterion():
    """record(n, checks) stores one line per acceptance criterion and asserts."""
    def record(n, checks):
        bad = sorted(k for k, ok in checks.items() if not ok)
        _criteria[n] = bad
        print("criterion %2d: %s%s" % (n, "PASS" if not bad else "FAIL",
                                       "" if not bad else "  (" + ", ".join(bad) + ")"))
        assert not bad, "criterion %d failed: %s" % (n, ", ".join(bad))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        bad = _criteria[n]
        terminalreporter.write_line("criterion %2d: %s%s" % (
            n, "PASS" if not bad else "FAIL", "" if not bad else "  (" + ", ".join(bad) + ")"))

import pytest

from kacsim import KernelSpec, build_rate_table


@pytest.fixture(scope="session")
def spec():
    return KernelSpec(d=3, gamma=0.5, nu=0.5)


@pytest.fixture(scope="session")
def table(spec):
    return build_rate_table(spec, cache=False)


@pytest.fixture(scope="session")
def spec_q():
    return KernelSpec(d=3, gamma=0.5, nu=0.25)


@pytest.fixture(scope="session")
def table_q(spec_q):
    return build_rate_table(spec_q, cache=False)


ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance line ``(criterion, passed, detail)``."""

    def _report(name, passed, detail):
        line = f"{name}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

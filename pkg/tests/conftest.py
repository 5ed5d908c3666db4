import pytest

from mokit.grid import Domain, sample
from mokit.phi import make_phi


@pytest.fixture
def unit():
    return Domain.interval(0.0, 1.0, 1000)


@pytest.fixture
def square_phi():
    return make_phi("M1", {"p": "2"})


def indicator(lo, hi, domain):
    return sample(lambda x: ((x > lo) & (x < hi)).astype(float), domain,
                  support_hint=((lo, hi),))


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


ACCEPTANCE = []


def record(criterion, ok, detail=""):
    """Log one acceptance verdict line and return ``ok``."""
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

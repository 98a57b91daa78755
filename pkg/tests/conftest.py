import numpy as np
import pytest

from bparhmm.conjugacy import MNIWPrior
from bparhmm.oracles import random_spd


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_prior(d, r, rng):
    p = d * r
    return MNIWPrior(n0=d + 1.0 + 3 * rng.random(), S0=random_spd(d, rng),
                     M=0.5 * rng.standard_normal((d, p)), L=random_spd(p, rng))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(name, passed, detail, gate=True):
    status = "PASS" if passed else ("FAIL" if gate else "SOFT-FAIL")
    line = f"{name}: {status}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

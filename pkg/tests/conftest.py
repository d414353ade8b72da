import numpy as np
import pytest
import scipy.sparse as sp

from fdsynth import CostStructure, DpmParams, ProtocolParams, RateModel, gen_dpm, gen_protocol, prepare


@pytest.fixture
def proto1():
    return gen_protocol(ProtocolParams(1))


@pytest.fixture
def proto1_c(proto1):
    return prepare(proto1)


@pytest.fixture
def dpm2_c():
    return prepare(gen_dpm(DpmParams(2)))


def retry_model(mu=2.0, impulse=3.0, rate_cost=1.0):
    """One fixed-delay state A that succeeds at rate ``mu``; a timeout restarts it at cost ``impulse``.

    Expected cost with timeout d: 1/mu + impulse * e^{-mu d} / (1 - e^{-mu d}).
    """
    states = ("A", "G")
    rates = sp.csr_array(np.array([[0.0, mu], [0.0, 0.0]]))
    F = sp.csr_array(np.array([[1.0, 0.0], [0.0, 1.0]]))
    I_F = sp.csr_array(np.array([[impulse, 0.0], [0.0, 0.0]]))
    costs = CostStructure.build(2, [rate_cost, 0.0], None, I_F)
    return RateModel(states, rates, ("A",), F, costs, "A", ("G",))


def retry_value(d, mu=2.0, impulse=3.0):
    e = np.exp(-mu * d)
    return 1 / mu + impulse * e / (1 - e)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

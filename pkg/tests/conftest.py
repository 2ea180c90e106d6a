import numpy as np
import pytest

from cohmeter.hilbert import DensityMatrix, ExcitationState, pure_density

# filled by tests/test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []

# Initial state of the incoherent-hopping scenario: amplitudes sqrt(1,2,4,2,1)/sqrt(10)
FIG1_AMPLITUDES = np.sqrt(np.array([1.0, 2.0, 4.0, 2.0, 1.0]) / 10)

# T_k5 of the W state from the dense random search in tests/oracles/dense_search.py.
# A search only proves lower bounds; k=2 (0.64^3) is reached exactly.
W_STATE_MEASURE = {2: 0.262144, 3: 0.2112686056, 4: 0.2113229662, 5: 0.2113696772}

# T_k5 of the fig1 initial state, same oracle
FIG1_MEASURE = {2: 0.2504170512, 3: 0.1803052923, 4: 0.1701736498, 5: 0.1694679542}


@pytest.fixture
def fig1_state() -> ExcitationState:
    return ExcitationState(FIG1_AMPLITUDES)


@pytest.fixture
def fig1_rho(fig1_state) -> DensityMatrix:
    return pure_density(fig1_state)


@pytest.fixture
def w5() -> DensityMatrix:
    return pure_density(ExcitationState.w_state(5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)

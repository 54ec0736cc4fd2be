import pytest

from virobif.model import ModelParams

# immune-free model used for the reduced analysis
P3D = dict(lam=0.36, beta=0.11, delta=0.44, K=1.0, gamma=1.0)
# innate-immunity model with constant clearance (epsilon = 0)
P_EPS0 = dict(lam=0.36, beta=0.11, delta=0.2, K=1.0, gamma=1.0, beta_v=0.16, beta_y=0.48,
              beta_z=0.6, c=0.036, epsilon=0)
# innate-immunity model with density-dependent clearance (epsilon = 1)
P_EPS1 = dict(K=1.0, beta=43.5, lam=1.0, gamma=1 / 128, delta=0.5, beta_y=1.0, beta_v=1.0,
              beta_z=1.0, c=1.0, epsilon=1)


@pytest.fixture
def p3d():
    return ModelParams(b=28.0, **P3D)


@pytest.fixture
def eps0():
    return ModelParams(b=9.5, **P_EPS0)


@pytest.fixture
def eps1():
    return ModelParams(b=27.0, **P_EPS1)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

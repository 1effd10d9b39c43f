"""Shared fixtures and the acceptance-summary reporter.

Solver runs are cached per session because several test modules need the
same converged equilibria. Acceptance tests record a single pass/fail line
each through the `acceptance` fixture; the lines are printed in a summary
block at the end of the pytest run.
"""

import numpy as np
import pytest

import mfgsolver as m
from mfgsolver import mdp

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


class AcceptanceRecorder:
    """Collects named clause checks and asserts them together, so a failed
    criterion still reports every measured value."""

    def __init__(self, key):
        self.key = key
        self.clauses = []

    def check(self, label, ok, detail=""):
        self.clauses.append((label, bool(ok), detail))

    def finish(self):
        failed = [c for c in self.clauses if not c[1]]
        verdict = "PASS" if not failed else "FAIL"
        details = "; ".join(
            f"{label}: {'ok' if ok else 'FAIL'}"
            + (f" ({detail})" if detail else "")
            for label, ok, detail in self.clauses
        )
        line = f"{self.key}: {verdict} [{details}]"
        ACCEPTANCE_LINES[self.key] = line
        print(line)
        assert not failed, line


@pytest.fixture
def acceptance(request):
    key = request.node.name.split("_")[1].upper()
    rec = AcceptanceRecorder(key)
    yield rec
    # finish() is called by the test itself so timing clauses can be last.


@pytest.fixture(scope="session")
def malware2():
    return m.builtin_malware(2, (0.2, 1.0, 0.4), q=0.9)


@pytest.fixture(scope="session")
def malware10():
    return m.builtin_malware(10, (0.1, 1.0, 0.4))


@pytest.fixture(scope="session")
def eq2(malware2):
    eq, report = m.solve_gnep(malware2)
    return eq, report


@pytest.fixture(scope="session")
def eq10(malware10):
    eq, report = m.solve_gnep(malware10)
    return eq, report


@pytest.fixture(scope="session")
def expert2(malware2, eq2):
    """Exact expert data of the 2-state model at its equilibrium."""
    eq, _ = eq2
    f_E = mdp.feature_expectation(malware2, eq.policy, eq.mean_field, eq.mean_field)
    return eq.mean_field, f_E


@pytest.fixture(scope="session")
def expert10(malware10, eq10):
    eq, _ = eq10
    f_E = mdp.feature_expectation(malware10, eq.policy, eq.mean_field, eq.mean_field)
    return eq.mean_field, f_E


def random_feasible_instance(rng, feature_dim=1):
    """Small random model with a valid constant kernel, a random policy,
    and a random initial distribution."""
    X = int(rng.integers(2, 5))
    A = int(rng.integers(2, 4))
    beta = float(rng.uniform(0.9, 0.97))
    P0 = rng.random((X, X, A))
    P0 /= P0.sum(axis=0, keepdims=True)
    spec = m.ModelSpec(
        n_states=X, n_actions=A, feature_dim=feature_dim, beta=beta,
        P0=P0, P1=np.zeros((X, X, A, X)),
        F0=rng.random((X, A, feature_dim)),
        F1=np.zeros((X, A, feature_dim, X)),
    )
    pi = rng.random((X, A))
    pi /= pi.sum(axis=1, keepdims=True)
    mu0 = rng.random(X)
    mu0 /= mu0.sum()
    return spec, pi, mu0

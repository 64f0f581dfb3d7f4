import numpy as np
import pytest


def random_density(rng, rank=None):
    rank = rank or rng.integers(1, 3)
    g = rng.normal(size=(2, rank)) + 1j * rng.normal(size=(2, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_cptp_kraus(rng, n_ops=None):
    """Kraus set from a random isometry of a 2-dim input into 2 x n_ops dims."""
    n_ops = n_ops or int(rng.integers(1, 5))
    u = random_unitary(rng, 2 * n_ops)
    iso = u[:, :2]
    return [iso[2 * k : 2 * k + 2, :] for k in range(n_ops)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

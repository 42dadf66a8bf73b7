import numpy as np
import pytest

from pdestride.simulate import BurgersConfig, simulate_burgers


@pytest.fixture(scope="session")
def burgers():
    """Clean default Burgers run (256 x 1000), shared across tests."""
    return simulate_burgers(BurgersConfig())


@pytest.fixture(scope="session")
def burgers_short():
    """A 256 x 200 Burgers run for faster pipeline tests."""
    return simulate_burgers(BurgersConfig(nt=200))


def sparse_system(rng, n=50, p=8, k=2, snr=20.0, orthonormal=False):
    """Random design with a ``k``-sparse truth and Gaussian noise at the given SNR."""
    theta = rng.standard_normal((n, p))
    if orthonormal:
        theta, _ = np.linalg.qr(theta)
    xi = np.zeros(p)
    support = np.sort(rng.choice(p, size=k, replace=False))
    xi[support] = rng.choice([-1.0, 1.0], size=k) * rng.uniform(1.0, 2.0, size=k)
    signal = theta @ xi
    noise = rng.standard_normal(n)
    noise *= np.linalg.norm(signal) / (snr * np.linalg.norm(noise))
    return theta, signal + noise, xi, support


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one verdict line per acceptance criterion; printed in the summary."""

    def record(line):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

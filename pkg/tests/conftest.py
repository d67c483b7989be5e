import numpy as np
import pytest

from sllcert.network import Network

TOY_W = np.array([[3.0, 4.0], [0.0, -5.0]])
TOY_X = np.array([0.0, -1.0])


def toy_net():
    """One hidden layer, W = [[3,4],[0,-5]], zero bias, identity classifier."""
    return Network.from_weights([TOY_W], np.eye(2))


def random_net(rng, dims, bias=True, scale=1.0):
    """Gaussian net with ``dims = (d0, d1, ..., dK, C)``."""
    weights, biases = [], []
    for a, b in zip(dims[:-2], dims[1:-1]):
        weights.append(scale * rng.standard_normal((b, a)) / np.sqrt(a))
        biases.append(0.3 * rng.standard_normal(b) if bias else np.zeros(b))
    A = rng.standard_normal((dims[-1], dims[-2])) / np.sqrt(dims[-2])
    return Network.from_weights(weights, A, biases)


def ball_point(rng, d, radius=1.0):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u) * radius * rng.uniform() ** (1.0 / d)


@pytest.fixture
def toy():
    return toy_net()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def record(n, ok, detail):
    """Log one acceptance criterion; the lines are echoed in the terminal summary."""
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

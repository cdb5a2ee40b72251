import numpy as np
import pytest

from poissonclt import malliavin


@pytest.fixture(autouse=True, scope="session")
def _debug_crosscheck():
    # locality-accelerated difference operators are re-verified against full
    # re-evaluation throughout the suite
    malliavin.DEBUG_CROSSCHECK = True
    yield
    malliavin.DEBUG_CROSSCHECK = False


@pytest.fixture
def gen():
    return np.random.Generator(np.random.Philox(key=20240817))


def coupling_moment_gap(gen, q, L, alpha):
    """Random bounded coupling with exact discrete expectations.

    X is a random joint law on <= 5 atoms in [-L, L]^4; X' equals X on an
    event of probability 1 - alpha and is an independent-coordinates copy
    otherwise, so d_BL(X, X') <= 2 alpha.  Returns the exact mixed-moment
    gap |E prod X_i^{p_i} - E prod X'_i^{p_i}| for random powers summing
    to q.
    """
    k = int(gen.integers(2, 6))
    atoms = gen.uniform(-L, L, size=(k, 4))
    w = gen.exponential(1.0, size=k)
    w /= w.sum()
    powers = np.zeros(4, dtype=int)
    for _ in range(q):
        powers[gen.integers(0, 4)] += 1
    joint = float(np.sum(w * np.prod(atoms ** powers, axis=1)))
    product = float(np.prod([np.sum(w * atoms[:, i] ** powers[i]) for i in range(4)]))
    mixed = (1.0 - alpha) * joint + alpha * product
    return abs(joint - mixed)

import itertools

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_multilinear(G, S, T, U):
    """Entry-by-entry sum over all core indices."""
    R, P, Q = G.shape
    out = np.zeros((S.shape[0], T.shape[0], U.shape[0]))
    for i, j, k in itertools.product(*(range(d) for d in out.shape)):
        acc = 0.0
        for r, p, q in itertools.product(range(R), range(P), range(Q)):
            acc += S[i, r] * T[j, p] * U[k, q] * G[r, p, q]
        out[i, j, k] = acc
    return out


def brute_cp(A, B, C, w=None):
    """Sum of weighted outer products, built from np.multiply.outer."""
    R = A.shape[1]
    w = np.ones(R) if w is None else w
    out = np.zeros((A.shape[0], B.shape[0], C.shape[0]))
    for r in range(R):
        out += w[r] * np.multiply.outer(np.multiply.outer(A[:, r], B[:, r]), C[:, r])
    return out


def random_orthonormal(rng, n, k):
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return Q


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

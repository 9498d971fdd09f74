"""Explicit CP sequences that diverge toward boundary tensors of higher rank.

Each family maps ``n`` to a CP decomposition whose full tensor converges to
the family's ``limit`` at rate ``O(1/n)`` while (some of) the weights blow
up. Five kinds exist:

``r3_example``
    3x3x2 limit with a zero in position (1, 2) of the second slice; the
    three diverging components do not become proportional.
``r4_example``
    Four components built from two equal matrix products ``A B^T =
    A~ B~^T``; factor limits have ranks (2, 2, 1).
``r6_example``
    Six components built from two rank-3 decompositions of the same 2x2x2
    array; factor limits have ranks (2, 2, 2).
``generic_r3``, ``generic_332``
    Random normalized cores with triple eigenvalues and nonzero
    off-diagonal entries; all factor limits have rank 1.

Snapshots are returned in the absorbed representation (all-ones weights);
the ``n`` prefactor of ``r4_example`` and ``r6_example`` is absorbed into
the third factor. :func:`cpdegen.cp.normalize` extracts the weights as the
product of the three column norms.

Random matrices use ``numpy.random.default_rng(seed)`` with standard normal
entries, drawn in the order documented on each constructor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cp import CpDecomposition, normalize
from .exceptions import InvalidArgument
from .sgsd import closed_form_eigenvectors, closed_form_inverse_columns
from .tensor import rank1

DEFAULT_GRID = (10, 100, 1000, 10000)
KINDS = ("r3_example", "r4_example", "r6_example", "generic_r3", "generic_332")
Q_DET_MIN = 1e-3


@dataclass(frozen=True)
class SequenceFamily:
    kind: str
    rank: int
    limit: np.ndarray
    params: dict
    seed: int | None
    dims: tuple
    factor_fn: Callable[[float], tuple] = field(repr=False, compare=False)
    prefactor: Callable[[float], float] = field(repr=False, compare=False, default=lambda n: 1.0)
    parts: dict = field(default_factory=dict, repr=False, compare=False)
    limit_factors: tuple | None = field(default=None, repr=False, compare=False)
    """Limits of ``(A(n), B(n), C(n))`` as n grows, where all three exist."""

    def factors(self, n: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The factor matrices ``(A(n), B(n), C(n))`` as written, without the prefactor."""
        if not n > 0:
            raise InvalidArgument("n must be positive")
        return self.factor_fn(float(n))

    def snapshot(self, n: float) -> CpDecomposition:
        A, B, C = self.factors(n)
        return CpDecomposition.absorbed(A, B, self.prefactor(float(n)) * C)

    def normalized(self, n: float) -> CpDecomposition:
        return normalize(self.snapshot(n))

    def sweep(self, ns: Sequence[float] = DEFAULT_GRID) -> list[CpDecomposition]:
        return [self.normalized(n) for n in ns]

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "rank": self.rank,
            "params": dict(self.params),
            "seed": self.seed,
            "dims": list(self.dims),
        }


def _limit_from_terms(terms) -> np.ndarray:
    return sum(sign * rank1(a, b, c) for sign, a, b, c in terms)


def family_r3(a: float = 0.0, e: float = 1.0, f: float = 1.0) -> SequenceFamily:
    """Three non-proportional diverging components converging to a 3x3x2 array.

    The limit has slices ``I`` and ``[[a, 0, f], [0, a, e], [0, 0, a]]``.
    Snapshot ``n`` uses eigenvalues ``a + 1/n, a - 1/n, a + 2/n``.
    """
    if e == 0 or f == 0:
        raise InvalidArgument("e and f must be nonzero")
    a, e, f = float(a), float(e), float(f)
    X = np.zeros((3, 3, 2))
    X[:, :, 0] = np.eye(3)
    X[:, :, 1] = [[a, 0.0, f], [0.0, a, e], [0.0, 0.0, a]]

    def factors(n):
        an, bn, cn = a + 1.0 / n, a - 1.0 / n, a + 2.0 / n
        A = np.array([
            [1.0, 0.0, 1.0],
            [0.0, 1.0, e * (cn - an) / (f * (cn - bn))],
            [0.0, 0.0, (cn - an) / f],
        ])
        B = np.array([
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [f / (an - cn), e / (bn - cn), f / (cn - an)],
        ])
        C = np.array([[1.0, 1.0, 1.0], [an, bn, cn]])
        return A, B, C

    return SequenceFamily(
        kind="r3_example", rank=3, limit=X, params={"a": a, "e": e, "f": f},
        seed=None, dims=(3, 3, 2), factor_fn=factors,
        parts={"A_limit": np.array([[1.0, 0.0, 1.0], [0.0, 1.0, e / (3.0 * f)], [0.0, 0.0, 0.0]])},
    )


def family_r4(seed: int = 0, I: int = 6, J: int = 6, K: int = 5) -> SequenceFamily:
    """Four diverging components whose A and B limits have rank 2 and C limit rank 1.

    Draw order: ``A (I x 2)``, ``B (J x 2)``, ``Q (2 x 2)`` (redrawn while
    ``|det Q| < 1e-3``), ``c (K)``, ``X (I x 4)``, ``Y (J x 4)``,
    ``Z (K x 4)``. With ``A~ = A Q`` and ``B~ = B Q^{-T}`` the snapshot is
    ``n * ([a1+x1/n, a2+x2/n, -a~1-x3/n, -a~2-x4/n], [b1+y1/n, ...], [c+z1/n, ...])``.
    """
    if I < 6 or J < 6 or K < 5:
        raise InvalidArgument("need I >= 6, J >= 6, K >= 5")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((I, 2))
    B = rng.standard_normal((J, 2))
    Q = rng.standard_normal((2, 2))
    retries = 0
    while abs(np.linalg.det(Q)) < Q_DET_MIN:
        Q = rng.standard_normal((2, 2))
        retries += 1
    c = rng.standard_normal(K)
    Xr = rng.standard_normal((I, 4))
    Yr = rng.standard_normal((J, 4))
    Zr = rng.standard_normal((K, 4))
    At = A @ Q
    Bt = B @ np.linalg.inv(Q).T

    lead_A = np.column_stack([A, -At])
    lead_B = np.column_stack([B, Bt])
    sign_x = np.array([1.0, 1.0, -1.0, -1.0])

    def factors(n):
        An = lead_A + (Xr * sign_x[None, :]) / n
        Bn = lead_B + Yr / n
        Cn = c[:, None] + Zr / n
        return An, Bn, Cn

    terms = []
    for r, (a_r, b_r, s) in enumerate([(A[:, 0], B[:, 0], 1), (A[:, 1], B[:, 1], 1),
                                        (At[:, 0], Bt[:, 0], -1), (At[:, 1], Bt[:, 1], -1)]):
        terms += [(s, a_r, b_r, Zr[:, r]), (s, a_r, Yr[:, r], c), (s, Xr[:, r], b_r, c)]
    limit = _limit_from_terms(terms)

    return SequenceFamily(
        kind="r4_example", rank=4, limit=limit,
        params={"q_retries": retries}, seed=int(seed), dims=(I, J, K),
        factor_fn=factors, prefactor=lambda n: n,
        limit_factors=(lead_A, lead_B, np.repeat(c[:, None], 4, axis=1)),
        parts={"A": A, "B": B, "Q": Q, "A_tilde": At, "B_tilde": Bt, "c": c, "X": Xr, "Y": Yr, "Z": Zr},
    )


R6_A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
R6_B = np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 0.0]])
R6_C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
R6_A_TILDE = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, -1.0]])
R6_B_TILDE = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
R6_C_TILDE = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])


def family_r6(seed: int = 0, I: int = 8, J: int = 8, K: int = 8) -> SequenceFamily:
    """Six diverging components whose factor limits all have rank 2.

    Uses two rank-3 decompositions of the same 2x2x2 array, lifted by random
    ``S (I x 2)``, ``T (J x 2)``, ``U (K x 2)`` and perturbed by random
    ``X (I x 6)``, ``Y (J x 6)``, ``Z (K x 6)`` (draw order as listed).
    """
    if min(I, J, K) < 8:
        raise InvalidArgument("need I, J, K >= 8")
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((I, 2))
    T = rng.standard_normal((J, 2))
    U = rng.standard_normal((K, 2))
    Xr = rng.standard_normal((I, 6))
    Yr = rng.standard_normal((J, 6))
    Zr = rng.standard_normal((K, 6))

    lead_A = np.column_stack([S @ R6_A, -S @ R6_A_TILDE])
    lead_B = np.column_stack([T @ R6_B, T @ R6_B_TILDE])
    lead_C = np.column_stack([U @ R6_C, U @ R6_C_TILDE])
    signs = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])

    def factors(n):
        return lead_A + (Xr * signs[None, :]) / n, lead_B + Yr / n, lead_C + Zr / n

    terms = []
    for r in range(3):
        sa, tb, uc = S @ R6_A[:, r], T @ R6_B[:, r], U @ R6_C[:, r]
        terms += [(1, sa, tb, Zr[:, r]), (1, sa, Yr[:, r], uc), (1, Xr[:, r], tb, uc)]
    for s_ in range(3):
        sa, tb, uc = S @ R6_A_TILDE[:, s_], T @ R6_B_TILDE[:, s_], U @ R6_C_TILDE[:, s_]
        terms += [(-1, sa, tb, Zr[:, s_ + 3]), (-1, sa, Yr[:, s_ + 3], uc), (-1, Xr[:, s_ + 3], tb, uc)]
    limit = _limit_from_terms(terms)

    return SequenceFamily(
        kind="r6_example", rank=6, limit=limit, params={}, seed=int(seed), dims=(I, J, K),
        factor_fn=factors, prefactor=lambda n: n,
        limit_factors=(lead_A, lead_B, lead_C),
        parts={"S": S, "T": T, "U": U, "X": Xr, "Y": Yr, "Z": Zr},
    )


def _nonzero(rng: np.random.Generator, size=None):
    # magnitudes in [0.5, 2] keep the 1/n convergence constants moderate
    mag = rng.uniform(0.5, 2.0, size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return mag * sign


def family_generic(seed: int = 0, kind: str = "generic_r3") -> SequenceFamily:
    """Generic boundary core with triple eigenvalues; all factors converge to rank 1.

    The limit core has slices ``I``, ``a I + N`` and (for ``generic_r3``)
    ``alpha I + c1 N + c2 N^2`` with ``N = [[0, d, f], [0, 0, e], [0, 0, 0]]``.
    The third slice is a polynomial in the second because limits of
    simultaneously diagonalizable slices commute; this still gives nonzero
    off-diagonal entries ``c1 d``, ``c1 e``, ``c1 f + c2 d e``.

    Snapshot ``n`` replaces the diagonal ``a, a, a`` by ``a - 1/n, a, a + 1/n``;
    ``A(n)`` holds the closed-form eigenvectors, ``B(n) = A(n)^{-T}`` and
    ``C(n)`` stacks a row of ones and the slice eigenvalues.

    Draw order: ``a``, ``alpha``, then ``d, e, f, c1, c2`` (sign times a
    magnitude uniform in [0.5, 2]); ``generic_332`` draws ``a`` and
    ``d, e, f`` only.
    """
    if kind not in ("generic_r3", "generic_332"):
        raise InvalidArgument(f"unknown generic kind {kind!r}")
    rng = np.random.default_rng(seed)
    three = kind == "generic_r3"
    a = float(rng.standard_normal())
    alpha = float(rng.standard_normal()) if three else None
    d, e, f = (float(v) for v in _nonzero(rng, 3))
    c1, c2 = (float(v) for v in _nonzero(rng, 2)) if three else (None, None)

    N0 = np.array([[0.0, d, f], [0.0, 0.0, e], [0.0, 0.0, 0.0]])
    K = 3 if three else 2
    G = np.zeros((3, 3, K))
    G[:, :, 0] = np.eye(3)
    G[:, :, 1] = a * np.eye(3) + N0
    if three:
        G[:, :, 2] = alpha * np.eye(3) + c1 * N0 + c2 * N0 @ N0

    def factors(n):
        lam = np.array([a - 1.0 / n, a, a + 1.0 / n])
        A = closed_form_eigenvectors(*lam, d, e, f)
        B = closed_form_inverse_columns(*lam, d, e, f)
        rows = [np.ones(3), lam]
        if three:
            mu = lam - a
            rows.append(alpha + c1 * mu + c2 * mu**2)
        return A, B, np.vstack(rows)

    params = {"a": a, "d": d, "e": e, "f": f}
    if three:
        params.update(alpha=alpha, c1=c1, c2=c2)
    return SequenceFamily(
        kind=kind, rank=3, limit=G, params=params, seed=int(seed), dims=G.shape,
        factor_fn=factors,
    )


def make_family(kind: str, **kwargs) -> SequenceFamily:
    """Build a family by kind name; ``kwargs`` go to the matching constructor."""
    kind = kind.replace("-", "_")
    aliases = {"r3": "r3_example", "r4": "r4_example", "r6": "r6_example"}
    kind = aliases.get(kind, kind)
    if kind == "r3_example":
        return family_r3(**{k: kwargs[k] for k in ("a", "e", "f") if k in kwargs})
    if kind == "r4_example":
        return family_r4(**{k: kwargs[k] for k in ("seed", "I", "J", "K") if k in kwargs})
    if kind == "r6_example":
        return family_r6(**{k: kwargs[k] for k in ("seed", "I", "J", "K") if k in kwargs})
    if kind in ("generic_r3", "generic_332"):
        return family_generic(seed=kwargs.get("seed", 0), kind=kind)
    raise InvalidArgument(f"unknown family kind {kind!r}; expected one of {KINDS}")

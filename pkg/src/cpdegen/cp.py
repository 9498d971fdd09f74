"""CP decompositions: the value type, evaluation, normalization and congruence."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .exceptions import ContractViolation, DegenerateComponentError, InvalidArgument
from .tensor import as_matrix

UNIT_NORM_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CpDecomposition:
    """``Y = sum_r weights[r] * (A[:, r] o B[:, r] o C[:, r])``.

    With ``normalized=True`` every factor column has unit Euclidean norm and
    the weights carry all magnitude. With ``normalized=False`` (the
    "absorbed" representation) columns are arbitrary; :func:`normalize`
    converts to the normalized form.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        R = A.shape[1]
        if B.shape[1] != R or C.shape[1] != R or w.size != R:
            raise InvalidArgument(
                f"component counts disagree: A{A.shape}, B{B.shape}, C{C.shape}, weights({w.size})"
            )
        if not np.all(np.isfinite(w)):
            raise InvalidArgument("weights contain NaN or Inf")
        if self.normalized:
            for name, M in (("A", A), ("B", B), ("C", C)):
                norms = np.linalg.norm(M, axis=0)
                if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                    raise ContractViolation(f"columns of {name} are not unit norm")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def absorbed(cls, A, B, C) -> "CpDecomposition":
        """Absorbed representation: all-ones weights, unnormalized columns."""
        R = np.shape(A)[1]
        return cls(A, B, C, np.ones(R), normalized=False)

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])


@dataclass(frozen=True)
class ComponentGroup:
    """Sorted, duplicate-free, nonempty set of 0-based component indices."""

    indices: tuple[int, ...] = field()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise InvalidArgument("a component group cannot be empty")
        if any(i < 0 for i in idx):
            raise InvalidArgument(f"negative component index in {idx}")
        if len(set(idx)) != len(idx) or list(idx) != sorted(idx):
            raise InvalidArgument(f"group indices must be sorted and unique: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "ComponentGroup":
        return cls(tuple(sorted(set(int(i) for i in indices))))

    def check(self, R: int) -> None:
        if self.indices[-1] >= R:
            raise InvalidArgument(f"group {self.indices} out of range for R={R}")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def label(self) -> str:
        return "-".join(str(i) for i in self.indices)


def _as_group(D) -> ComponentGroup:
    return D if isinstance(D, ComponentGroup) else ComponentGroup.of(D)


def evaluate(cp: CpDecomposition) -> np.ndarray:
    """Full tensor of the decomposition.

    Computed slice by slice as ``Y_k = A diag(w * C[k, :]) B^T``.
    """
    Aw = cp.A * cp.weights[None, :]
    return np.einsum("ir,jr,kr->ijk", Aw, cp.B, cp.C, optimize=True)


def normalize(cp: CpDecomposition) -> CpDecomposition:
    """Move column magnitudes into the weights and fix signs.

    The sign convention makes the largest-magnitude entry of each ``a_r``
    positive (first such entry on ties), and likewise for ``b_r`` and
    ``c_r``; the sign flips are pushed into the weights.

    Raises
    ------
    DegenerateComponentError
        If any factor column is exactly zero.
    """
    w = cp.weights.copy()
    factors = []
    for name, M in (("A", cp.A), ("B", cp.B), ("C", cp.C)):
        norms = np.linalg.norm(M, axis=0)
        if np.any(norms == 0.0):
            bad = np.flatnonzero(norms == 0.0).tolist()
            raise DegenerateComponentError(f"zero column(s) {bad} in {name}")
        M = M / norms[None, :]
        pivot = M[np.argmax(np.abs(M), axis=0), np.arange(M.shape[1])]
        signs = np.where(pivot < 0, -1.0, 1.0)
        factors.append(M * signs[None, :])
        w = w * norms * signs
    return CpDecomposition(*factors, w, normalized=True)


def group_sum(cp: CpDecomposition, D) -> np.ndarray:
    """Partial evaluation over the components in ``D`` only."""
    D = _as_group(D)
    D.check(cp.rank)
    idx = list(D.indices)
    sub = CpDecomposition(cp.A[:, idx], cp.B[:, idx], cp.C[:, idx], cp.weights[idx], normalized=False)
    return evaluate(sub)


def _require_normalized(cp: CpDecomposition) -> None:
    if not cp.normalized:
        raise ContractViolation("congruence needs the normalized representation")


def congruence(cp: CpDecomposition, r: int, s: int) -> float:
    """Triple cosine ``(a_r.a_s)(b_r.b_s)(c_r.c_s)`` of two distinct components."""
    _require_normalized(cp)
    R = cp.rank
    if r == s or not (0 <= r < R and 0 <= s < R):
        raise InvalidArgument(f"need two distinct components in range, got {r}, {s} (R={R})")
    return float((cp.A[:, r] @ cp.A[:, s]) * (cp.B[:, r] @ cp.B[:, s]) * (cp.C[:, r] @ cp.C[:, s]))


def congruence_matrix(cp: CpDecomposition) -> np.ndarray:
    """All pairwise triple cosines; the diagonal is 1."""
    _require_normalized(cp)
    return (cp.A.T @ cp.A) * (cp.B.T @ cp.B) * (cp.C.T @ cp.C)


def from_rank1_terms(terms) -> CpDecomposition:
    """Absorbed decomposition from an iterable of ``(a, b, c)`` vector triples."""
    terms = list(terms)
    A = np.column_stack([t[0] for t in terms])
    B = np.column_stack([t[1] for t in terms])
    C = np.column_stack([t[2] for t in terms])
    return CpDecomposition.absorbed(A, B, C)


"""Dense 3-way arrays and the multilinear algebra built on them.

Tensors are plain ``numpy.ndarray`` objects of shape ``(I, J, K)`` and
matrices are 2-D arrays. The functions here validate their inputs and never
modify them in place.

Linearization
-------------
Whenever a tensor is flattened (file I/O, unfoldings) the first index runs
fastest: entry ``(i, j, k)`` sits at position ``i + I*j + I*J*k``. This is
numpy's Fortran order. Matrices are flattened column-major in the same way.

Unfoldings follow the Kolda-Bader convention: the mode-n unfolding has the
mode-n fibers as columns, ordered with the remaining indices in increasing
mode order, the lower mode running fastest.
"""
from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgument

DEFAULT_RANK_TOL = 1e-8


def as_tensor3(Y, name: str = "tensor") -> np.ndarray:
    """Return ``Y`` as a finite float64 array with three positive dimensions."""
    arr = np.asarray(Y, dtype=float)
    if arr.ndim != 3:
        raise InvalidArgument(f"{name} must be 3-way, got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise InvalidArgument(f"{name} has a zero dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains NaN or Inf")
    return arr


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgument(f"{name} must be 2-D, got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise InvalidArgument(f"{name} has a zero dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains NaN or Inf")
    return arr


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be a vector, got ndim={arr.ndim}")
    if arr.size == 0:
        raise InvalidArgument(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains NaN or Inf")
    return arr


def rank1(a, b, c) -> np.ndarray:
    """Outer product ``a o b o c`` with entries ``a[i] * b[j] * c[k]``."""
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    c = _as_vector(c, "c")
    return a[:, None, None] * b[None, :, None] * c[None, None, :]


def multilinear_multiply(G, S, T, U) -> np.ndarray:
    """Multilinear product ``(S, T, U) . G``.

    Parameters
    ----------
    G : array, shape (R, P, Q)
    S : array, shape (I, R)
    T : array, shape (J, P)
    U : array, shape (K, Q)

    Returns
    -------
    array, shape (I, J, K)
        ``y[i,j,k] = sum_{r,p,q} S[i,r] T[j,p] U[k,q] G[r,p,q]``.
    """
    G = as_tensor3(G, "G")
    S = as_matrix(S, "S")
    T = as_matrix(T, "T")
    U = as_matrix(U, "U")
    R, P, Q = G.shape
    if S.shape[1] != R or T.shape[1] != P or U.shape[1] != Q:
        raise InvalidArgument(
            f"inner dimensions do not match core {G.shape}: "
            f"S{S.shape}, T{T.shape}, U{U.shape}"
        )
    out = np.tensordot(S, G, axes=(1, 0))  # I x P x Q
    out = np.tensordot(out, T, axes=(1, 1))  # I x Q x J
    out = np.tensordot(out, U, axes=(1, 1))  # I x J x K
    return out


def slicemix(G, U) -> np.ndarray:
    """Recombine frontal slices: slice ``k'`` of the result is ``sum_k U[k', k] G[:, :, k]``."""
    G = as_tensor3(G, "G")
    U = as_matrix(U, "U")
    if U.shape[1] != G.shape[2]:
        raise InvalidArgument(
            f"mixing matrix has {U.shape[1]} columns, tensor has {G.shape[2]} slices"
        )
    return np.tensordot(G, U, axes=(2, 1))


def frobenius_norm(Y) -> float:
    return float(np.linalg.norm(np.asarray(Y, dtype=float).ravel()))


def _check_mode(mode) -> int:
    if mode not in (1, 2, 3):
        raise InvalidArgument(f"mode must be 1, 2 or 3, got {mode!r}")
    return int(mode) - 1


def unfold(Y, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding (modes are numbered 1, 2, 3)."""
    Y = as_tensor3(Y)
    m = _check_mode(mode)
    return np.moveaxis(Y, m, 0).reshape(Y.shape[m], -1, order="F")


def refold(M, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of shape ``dims``."""
    m = _check_mode(mode)
    dims = tuple(int(d) for d in dims)
    M = np.asarray(M, dtype=float)
    moved = (dims[m],) + tuple(d for i, d in enumerate(dims) if i != m)
    if M.shape != (moved[0], int(np.prod(moved[1:]))):
        raise InvalidArgument(f"matrix shape {M.shape} does not fit dims {dims}")
    return np.moveaxis(M.reshape(moved, order="F"), 0, m)


def numerical_rank(M, tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values strictly above ``tol * sigma_max``.

    The zero matrix has rank 0.
    """
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def mode_rank(Y, mode: int, tol: float = DEFAULT_RANK_TOL) -> int:
    return numerical_rank(unfold(Y, mode), tol)


def mode_ranks(Y, tol: float = DEFAULT_RANK_TOL) -> tuple[int, int, int]:
    return tuple(mode_rank(Y, m, tol) for m in (1, 2, 3))

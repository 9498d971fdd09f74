"""Alternating least squares for the rank-R CP approximation of a 3-way array.

Each sweep updates ``A`` given ``(B, C)``, then ``B``, then ``C``, each an
exact linear least-squares problem with normal equations

    A (B^T B * C^T C) = Z_(1) (C kr B)

(``*`` elementwise, ``kr`` the column-wise Khatri-Rao product). After the
sweep the columns are normalized and the magnitudes moved into the weights,
so the trace shows ``w`` directly. When a Gram matrix is singular or has
condition number above ``GRAM_COND_MAX`` the solve adds a ridge of
``1e-12 * |Z|^2`` to its diagonal and the trace records a warning. On
degenerate targets this happens routinely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import khatri_rao

from .cp import CpDecomposition, evaluate
from .exceptions import InvalidArgument
from .tensor import as_tensor3, frobenius_norm, unfold

RIDGE_FACTOR = 1e-12
GRAM_COND_MAX = 1e14
DEFAULT_MAX_ITERS = 5000
DEFAULT_REL_TOL = 1e-8
DEFAULT_WINDOW = 50
INITS = ("random", "hosvd")


@dataclass(frozen=True)
class FitTrace:
    """Per-sweep record of an ALS run.

    Row ``t`` of each array belongs to sweep ``iters[t]`` (1-based):
    ``fit_errors`` holds ``|Z - Y|``, ``weights`` the normalized weight
    vector and ``congruence`` the matrix of absolute pairwise triple
    cosines.
    """

    iters: np.ndarray
    fit_errors: np.ndarray
    weights: np.ndarray
    congruence: np.ndarray
    final: CpDecomposition
    reason: str
    norm_Z: float
    max_iters: int
    rel_tol: float
    seed: int
    init: str
    warnings: tuple = field(default_factory=tuple)

    def __len__(self) -> int:
        return int(self.iters.size)

    @property
    def max_abs_omega(self) -> np.ndarray:
        return np.max(np.abs(self.weights), axis=1)

    @property
    def min_congruence(self) -> np.ndarray:
        R = self.weights.shape[1]
        if R < 2:
            return np.ones(len(self))
        iu = np.triu_indices(R, 1)
        return np.min(self.congruence[:, iu[0], iu[1]], axis=1)

    @property
    def last_rel_change(self) -> float:
        """``(f_prev - f_last) / |Z|`` of the final sweep; 0 for a zero target."""
        if len(self) < 2 or self.norm_Z == 0.0:
            return 0.0
        return float((self.fit_errors[-2] - self.fit_errors[-1]) / self.norm_Z)

    def csv_header(self) -> list[str]:
        R = self.weights.shape[1]
        return ["iter", "fit_error"] + [f"omega_{r + 1}" for r in range(R)] + ["min_congruence", "max_abs_omega"]

    def csv_rows(self):
        mc, mo = self.min_congruence, self.max_abs_omega
        for t in range(len(self)):
            yield [int(self.iters[t]), float(self.fit_errors[t]), *self.weights[t].tolist(), float(mc[t]), float(mo[t])]


def _solve_gram(rhs: np.ndarray, gram: np.ndarray, ridge: float):
    """Solve ``X gram = rhs`` for ``X``; returns ``(X, regularized)``."""
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] > 0 and sv[0] <= GRAM_COND_MAX * sv[-1]:
        return np.linalg.solve(gram, rhs.T).T, False
    if ridge > 0.0:
        return np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs.T).T, True
    return np.linalg.lstsq(gram, rhs.T, rcond=None)[0].T, True


def _init_factors(Z: np.ndarray, R: int, init: str, rng: np.random.Generator):
    dims = Z.shape
    if init == "random":
        mats = [rng.standard_normal((d, R)) for d in dims]
    else:
        mats = []
        for mode, d in enumerate(dims, start=1):
            U, _, _ = np.linalg.svd(unfold(Z, mode), full_matrices=False)
            k = min(R, U.shape[1])
            extra = rng.standard_normal((d, R - k)) if R > k else np.zeros((d, 0))
            mats.append(np.column_stack([U[:, :k], extra]))
    return [M / np.linalg.norm(M, axis=0)[None, :] for M in mats]


def _normalize_columns(A, B, C):
    """Unit columns plus weights; a zero column gets weight 0 and the placeholder ``e_1``."""
    w = np.ones(A.shape[1])
    out = []
    for M in (A, B, C):
        norms = np.sqrt(np.einsum("ir,ir->r", M, M))
        zero = norms == 0.0
        M = M / np.where(zero, 1.0, norms)
        if zero.any():
            M[:, zero] = 0.0
            M[0, zero] = 1.0
        w = w * np.where(zero, 0.0, norms)
        out.append(M)
    return out[0], out[1], out[2], w


def fit_als(
    Z,
    R: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    seed: int = 0,
    init: str = "random",
) -> FitTrace:
    """Fit a rank-``R`` CP decomposition to ``Z`` by alternating least squares.

    Parameters
    ----------
    Z : array_like, shape (I, J, K)
    R : int
        Number of components, at least 1.
    max_iters : int
        Maximum number of sweeps.
    rel_tol : float
        Stop when a sweep lowers the fit error ``|Z - Y|`` by less than
        ``rel_tol * |Z|``.
    seed : int
        Seed of the generator that draws the starting factors (``A``, ``B``,
        ``C`` in that order, standard normal, columns normalized).
    init : {"random", "hosvd"}
        ``"hosvd"`` starts from the leading singular vectors of each
        unfolding, padded with random columns when ``R`` exceeds a dimension.

    Returns
    -------
    FitTrace
        One record per sweep; ``reason`` is ``"converged"``, ``"exact"``
        (zero fit error) or ``"max_iters"``.
    """
    Z = as_tensor3(Z, "Z")
    if int(R) != R or R < 1:
        raise InvalidArgument(f"R must be a positive integer, got {R!r}")
    if int(max_iters) != max_iters or max_iters < 1:
        raise InvalidArgument(f"max_iters must be a positive integer, got {max_iters!r}")
    if not rel_tol >= 0:
        raise InvalidArgument("rel_tol must be nonnegative")
    if init not in INITS:
        raise InvalidArgument(f"init must be one of {INITS}, got {init!r}")
    R = int(R)
    rng = np.random.default_rng(seed)
    A, B, C = _init_factors(Z, R, init, rng)
    Z1, Z2, Z3 = unfold(Z, 1), unfold(Z, 2), unfold(Z, 3)
    norm_Z = frobenius_norm(Z)
    ridge = RIDGE_FACTOR * norm_Z**2

    prev = frobenius_norm(Z - evaluate(CpDecomposition.absorbed(A, B, C)))
    fits = np.empty(max_iters)
    weights = np.empty((max_iters, R))
    cong = np.empty((max_iters, R, R))
    warnings = []
    reason = "max_iters"
    it = 0
    while it < max_iters:
        it += 1
        A, reg_a = _solve_gram(Z1 @ khatri_rao(C, B), (B.T @ B) * (C.T @ C), ridge)
        B, reg_b = _solve_gram(Z2 @ khatri_rao(C, A), (A.T @ A) * (C.T @ C), ridge)
        kr = khatri_rao(B, A)
        C, reg_c = _solve_gram(Z3 @ kr, (A.T @ A) * (B.T @ B), ridge)
        for mode, reg in (("A", reg_a), ("B", reg_b), ("C", reg_c)):
            if reg:
                warnings.append(f"iter {it}: ill-conditioned Gram matrix for {mode}, ridge solve")
        err = float(np.linalg.norm(Z3 - C @ kr.T))
        A, B, Cn, w = _normalize_columns(A, B, C)
        C = Cn * w
        fits[it - 1] = err
        weights[it - 1] = w
        cong[it - 1] = np.abs((A.T @ A) * (B.T @ B) * (Cn.T @ Cn))
        if err == 0.0:
            reason = "exact"
            break
        if prev - err < rel_tol * norm_Z:
            reason = "converged"
            break
        prev = err
    final = CpDecomposition(A, B, Cn, w, normalized=True)
    return FitTrace(
        iters=np.arange(1, it + 1), fit_errors=fits[:it].copy(), weights=weights[:it].copy(),
        congruence=cong[:it].copy(), final=final, reason=reason, norm_Z=norm_Z,
        max_iters=int(max_iters), rel_tol=float(rel_tol), seed=int(seed), init=init,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class SwampMetrics:
    weight_growth_rate: float
    fit_decay_rate: float
    min_group_congruence: float
    window: int

    def to_dict(self) -> dict:
        return {
            "weight_growth_rate": self.weight_growth_rate,
            "fit_decay_rate": self.fit_decay_rate,
            "min_group_congruence": self.min_group_congruence,
            "window": self.window,
        }


def swamp_metrics(trace: FitTrace, window: int = DEFAULT_WINDOW) -> SwampMetrics:
    """Summary of the last ``window`` sweeps (the whole trace if it is shorter).

    ``weight_growth_rate``
        Per-sweep change of ``log max|w|``.
    ``fit_decay_rate``
        Per-sweep decrease of the fit error, relative to ``|Z|``.
    ``min_group_congruence``
        Smallest per-sweep minimum pairwise ``|congruence|`` in the window.
        Components of a diverging group become congruent, so values near
        1 indicate a swamp.
    """
    if len(trace) == 0:
        raise InvalidArgument("trace is empty")
    if window < 1:
        raise InvalidArgument("window must be positive")
    lo = max(0, len(trace) - window)
    omega = trace.max_abs_omega[lo:]
    fits = trace.fit_errors[lo:]
    steps = omega.size - 1
    if steps == 0:
        growth = decay = 0.0
    else:
        tiny = np.finfo(float).tiny
        growth = (np.log(max(omega[-1], tiny)) - np.log(max(omega[0], tiny))) / steps
        decay = (fits[0] - fits[-1]) / (steps * trace.norm_Z) if trace.norm_Z > 0 else 0.0
    cong = float(np.min(trace.min_congruence[lo:]))
    return SwampMetrics(float(growth), float(decay), cong, int(omega.size))

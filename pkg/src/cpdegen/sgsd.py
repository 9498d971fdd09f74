"""Simultaneous generalized Schur decomposition and joint eigenstructure.

Pipeline for a boundary tensor ``X``::

    form = sgsd_jacobi(X, R)                 # X ~ (S, T, U) . G, slices of G upper triangular
    mix = find_nonsingular_slicemix(form.G)  # may be None
    core = normalize_first_slice(form.G, mix)
    eig = eigen_structure(core)

``closed_form_3x3`` gives the explicit eigenvectors of a 3x3 upper
triangular slice with distinct diagonal, and the columns of the
inverse-transpose, for comparison with the numerical path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ClosedFormUndefined, InvalidArgument
from .tensor import as_tensor3, frobenius_norm, multilinear_multiply, unfold

DEFAULT_MAX_SWEEPS = 200
DEFAULT_TOL = 1e-12
DEFAULT_COND_CAP = 1e8
DEFAULT_COINCIDENCE_TOL = 1e-6
DEFAULT_NULL_TOL = 1e-6
ORTHO_DRIFT_TOL = 1e-12


def strictly_lower_norm(G: np.ndarray) -> float:
    """Frobenius norm of the strictly-lower parts of all frontal slices."""
    R = G.shape[0]
    mask = np.tril(np.ones((R, G.shape[1]), dtype=bool), -1)
    return float(np.linalg.norm(G[mask, :]))


@dataclass(frozen=True)
class SchurForm:
    """``X ~ (S, T, U) . G`` with column-wise orthonormal factors and triangular slices."""

    S: np.ndarray
    T: np.ndarray
    U: np.ndarray
    G: np.ndarray
    below_diag_residual: float
    reconstruction_error: float
    norm_X: float
    converged: bool
    sweeps: int
    objective_history: tuple = ()
    reorthonormalized: bool = False

    @property
    def R(self) -> int:
        return self.G.shape[0]


def _leading_basis(M: np.ndarray, k: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(M, full_matrices=True)
    return u[:, :k]


def _rotation_angle(m_cos: float, m_sin: float) -> float | None:
    # minimizes m + m_cos*cos(2t) + m_sin*sin(2t)
    if m_cos == 0.0 and m_sin == 0.0:
        return None
    psi = math.atan2(m_sin, m_cos)
    return 0.5 * (math.pi + psi)


def _sweep(G: np.ndarray, Q: np.ndarray, Z: np.ndarray) -> None:
    """One cyclic sweep of row (left) then column (right) rotations, in place."""
    R = G.shape[0]
    for p in range(R - 1):
        for q in range(p + 1, R):
            # left: rows p, q; only entries (q, p..q-1) change lower mass
            x = G[p, p:q, :]
            y = G[q, p:q, :]
            sxx, syy, sxy = float(np.sum(x * x)), float(np.sum(y * y)), float(np.sum(x * y))
            theta = _rotation_angle(0.5 * (syy - sxx), -sxy)
            if theta is not None:
                c, s = math.cos(theta), math.sin(theta)
                gp, gq = G[p].copy(), G[q]
                G[p] = c * gp + s * gq
                G[q] = -s * gp + c * gq
                qp, qq = Q[:, p].copy(), Q[:, q]
                Q[:, p] = c * qp + s * qq
                Q[:, q] = -s * qp + c * qq
            # right: columns p, q; only entries (p+1..q, p) change lower mass
            x = G[p + 1:q + 1, p, :]
            y = G[p + 1:q + 1, q, :]
            sxx, syy, sxy = float(np.sum(x * x)), float(np.sum(y * y)), float(np.sum(x * y))
            theta = _rotation_angle(0.5 * (sxx - syy), sxy)
            if theta is not None:
                c, s = math.cos(theta), math.sin(theta)
                gp, gq = G[:, p].copy(), G[:, q]
                G[:, p] = c * gp + s * gq
                G[:, q] = -s * gp + c * gq
                zp, zq = Z[:, p].copy(), Z[:, q]
                Z[:, p] = c * zp + s * zq
                Z[:, q] = -s * zp + c * zq


def _reflector(v: np.ndarray) -> np.ndarray:
    """Symmetric orthogonal matrix whose first column is the unit vector ``v``."""
    e1 = np.zeros_like(v)
    e1[0] = 1.0
    u = v - e1
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return np.eye(v.size)
    u /= nu
    return np.eye(v.size) - 2.0 * np.outer(u, u)


def _flag_candidates(sub: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
    m, _, K = sub.shape
    cands = []
    Ma = sub @ rng.standard_normal(K)
    Mb = sub @ rng.standard_normal(K)
    try:
        _, vr = scipy.linalg.eig(Ma, Mb)
        for j in range(vr.shape[1]):
            for part in (vr[:, j].real, vr[:, j].imag):
                nrm = np.linalg.norm(part)
                if nrm > 1e-8:
                    cands.append(part / nrm)
    except (np.linalg.LinAlgError, ValueError):
        pass
    stack = np.concatenate([sub[:, :, k] for k in range(K)], axis=0)
    _, _, vt = np.linalg.svd(stack)
    cands.append(vt[-1])
    return cands


def _refine_flag_vector(sub: np.ndarray, z: np.ndarray, iters: int = 100):
    """Alternate ``y = top left singular vector of [H_k z]`` and
    ``z = null direction of [(I - y y^T) H_k]`` to sharpen a flag pair."""
    m, _, K = sub.shape
    best = None
    for _ in range(iters):
        img = np.einsum("ijk,j->ik", sub, z)
        u, sv, _ = np.linalg.svd(img)
        y = u[:, 0]
        score = sv[1] if sv.size > 1 else 0.0
        if best is not None and score >= best[2] * (1 - 1e-3):
            break
        best = (z, y, score)
        P = np.eye(m) - np.outer(y, y)
        stack = np.concatenate([P @ sub[:, :, k] for k in range(K)], axis=0)
        _, _, vt = np.linalg.svd(stack)
        z = vt[-1]
    return best[0], best[1]


def _greedy_flag(H: np.ndarray, rng: np.random.Generator):
    """Build a common invariant flag one vector at a time.

    At each step the candidate ``z`` (pencil eigenvectors of two random
    mixtures, plus the best common near-null vector) whose images
    ``[H_1 z, ..., H_K z]`` are closest to rank one is moved to the front.
    """
    R, _, K = H.shape
    G = H.copy()
    Q, Z = np.eye(R), np.eye(R)
    for step in range(R - 1):
        sub = G[step:, step:, :]
        best, best_score = None, np.inf
        for v in _flag_candidates(sub, rng):
            img = np.einsum("ijk,j->ik", sub, v)
            sv = np.linalg.svd(img, compute_uv=False)
            score = sv[1] if sv.size > 1 else 0.0
            if score < best_score:
                best, best_score = v, score
        best, y = _refine_flag_vector(sub, best)
        Hz, Hy = _reflector(best), _reflector(y)
        G[step:, :, :] = np.einsum("ji,jlk->ilk", Hy, G[step:, :, :])
        G[:, step:, :] = np.einsum("ijk,jl->ilk", G[:, step:, :], Hz)
        Q[:, step:] = Q[:, step:] @ Hy
        Z[:, step:] = Z[:, step:] @ Hz
    return Q, Z


def _initial_rotations(H: np.ndarray, init: str, rng: np.random.Generator):
    R, _, K = H.shape
    if init == "identity":
        return np.eye(R), np.eye(R)
    if K == 1:
        Q, _ = np.linalg.qr(H[:, :, 0])
        return Q, np.eye(R)
    if init == "flag":
        return _greedy_flag(H, rng)
    if init == "qz":
        M1 = H @ rng.standard_normal(K)
        M2 = H @ rng.standard_normal(K)
        _, _, Q, Z = scipy.linalg.qz(M1, M2, output="real")
        return Q, Z
    raise InvalidArgument(f"unknown init {init!r}")


def sgsd_jacobi(
    X,
    R: int,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    tol: float = DEFAULT_TOL,
    init: str = "flag",
    seed: int = 0,
) -> SchurForm:
    """Jacobi-type simultaneous generalized Schur decomposition.

    ``X`` is first compressed onto the leading ``R`` (mode 1, 2) and
    ``min(R, K)`` (mode 3) singular subspaces. The compressed core is then
    brought to upper-triangular slices by cyclic sweeps over index pairs
    ``p < q``; each pair applies the row rotation and then the column
    rotation that minimize the strictly-lower sum of squares in closed
    form, so the objective never increases. Mixing slices with an
    orthogonal matrix leaves that objective unchanged, so the mode-3 basis
    stays the compression basis.

    Parameters
    ----------
    X : array_like, shape (I, J, K)
    R : int
        Core size in modes 1 and 2; needs ``R <= min(I, J)``. When
        ``K < R`` the core is ``R x R x K``.
    max_sweeps, tol : int, float
        Stop after ``max_sweeps`` or when the relative objective decrease of
        a sweep drops below ``tol``.
    init : {"flag", "qz", "identity"}
        Starting rotations. ``"flag"`` builds a common invariant flag
        greedily (exact for inputs that admit the form); ``"qz"`` takes the
        real QZ factors of two random slice mixtures, which only fits the
        first two slices; ``"identity"`` starts from the compression basis.
    seed : int
        Seed for the random slice mixtures used by the initializers.
    """
    X = as_tensor3(X, "X")
    I, J, K = X.shape
    if not 1 <= R <= min(I, J):
        raise InvalidArgument(f"R={R} must satisfy 1 <= R <= min(I, J) = {min(I, J)}")
    Kc = min(R, K)
    rng = np.random.default_rng(seed)

    S0 = _leading_basis(unfold(X, 1), R)
    T0 = _leading_basis(unfold(X, 2), R)
    U0 = _leading_basis(unfold(X, 3), Kc)
    H = multilinear_multiply(X, S0.T, T0.T, U0.T)

    Q, Z = _initial_rotations(H, init, rng)
    G = np.einsum("ri,rpk,pj->ijk", Q, H, Z)
    normH2 = float(np.sum(H * H))
    floor = (np.finfo(float).eps * max(normH2, np.finfo(float).tiny) ** 0.5) ** 2

    f = strictly_lower_norm(G) ** 2
    history = [f]
    converged = f <= floor or R == 1
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        _sweep(G, Q, Z)
        sweeps += 1
        f_new = strictly_lower_norm(G) ** 2
        history.append(f_new)
        if f_new <= floor or (f - f_new) <= tol * f:
            converged = True
        f = f_new

    reortho = False
    if max(np.abs(Q.T @ Q - np.eye(R)).max(), np.abs(Z.T @ Z - np.eye(R)).max()) > ORTHO_DRIFT_TOL:
        Q, _ = np.linalg.qr(Q)
        Z, _ = np.linalg.qr(Z)
        G = np.einsum("ri,rpk,pj->ijk", Q, H, Z)
        reortho = True

    S, T, U = S0 @ Q, T0 @ Z, U0
    recon = multilinear_multiply(G, S, T, U)
    return SchurForm(
        S=S,
        T=T,
        U=U,
        G=G,
        below_diag_residual=strictly_lower_norm(G),
        reconstruction_error=frobenius_norm(recon - X),
        norm_X=frobenius_norm(X),
        converged=bool(converged),
        sweeps=sweeps,
        objective_history=tuple(history),
        reorthonormalized=reortho,
    )


def _check_square_slices(G) -> np.ndarray:
    G = as_tensor3(G, "G")
    if G.shape[0] != G.shape[1]:
        raise InvalidArgument(f"slices must be square, got {G.shape}")
    return G


def _householder_completion(w: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first row is ``w / |w|``."""
    v = w / np.linalg.norm(w)
    e1 = np.zeros_like(v)
    e1[0] = 1.0
    u = v - e1
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return np.eye(v.size)
    u /= nu
    return np.eye(v.size) - 2.0 * np.outer(u, u)


def find_nonsingular_slicemix(
    G,
    attempts: int = 100,
    cond_cap: float = DEFAULT_COND_CAP,
    seed: int = 0,
) -> np.ndarray | None:
    """Search for a nonsingular mixing matrix whose first mixed slice is well conditioned.

    The coordinate slices are tried first (in order), then ``attempts``
    seeded random mixtures. A unit mixing vector ``w`` is accepted when
    ``|G|_F / sigma_min(sum_k w_k G_k) <= cond_cap``. This bounds the
    2-norm condition number of the mixed slice from above and, unlike it,
    rejects slices that are negligible relative to ``G`` (rounding noise
    is often well conditioned). Returns the ``K x K`` orthogonal mixing
    matrix with first row ``w``, or ``None``.
    """
    G = _check_square_slices(G)
    K = G.shape[2]
    scale = frobenius_norm(G)
    if scale == 0.0:
        return None

    def ok(M):
        smin = np.linalg.svd(M, compute_uv=False)[-1]
        return smin > 0 and scale / smin <= cond_cap

    for k in range(K):
        if ok(G[:, :, k]):
            perm = [k] + [i for i in range(K) if i != k]
            return np.eye(K)[perm]
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        w = rng.standard_normal(K)
        w /= np.linalg.norm(w)
        if ok(G @ w):
            return _householder_completion(w)
    return None


@dataclass(frozen=True)
class NormalizedCore:
    """Core with first slice equal to the identity; later slices upper triangular."""

    G: np.ndarray
    mix: np.ndarray
    first_inverse: np.ndarray
    identity_error: float
    lower_residual: float


def normalize_first_slice(G, mix=None) -> NormalizedCore:
    """Apply ``mix`` to the slices, then premultiply every slice by the inverse of the first."""
    G = _check_square_slices(G)
    K = G.shape[2]
    mix = np.eye(K) if mix is None else np.asarray(mix, dtype=float)
    Gm = np.tensordot(G, mix, axes=(2, 1))
    F = Gm[:, :, 0]
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise InvalidArgument("mixed first slice is singular")
    Finv = np.linalg.inv(F)
    core = np.einsum("ij,jlk->ilk", Finv, Gm)
    R = G.shape[0]
    return NormalizedCore(
        G=core,
        mix=mix,
        first_inverse=Finv,
        identity_error=float(np.linalg.norm(core[:, :, 0] - np.eye(R))),
        lower_residual=strictly_lower_norm(core),
    )


def multiplicity_partition(values, tol: float = DEFAULT_COINCIDENCE_TOL, floor: float | None = None) -> list[list[int]]:
    """Cluster positions whose values agree within ``tol * max|value|`` (single linkage).

    ``floor`` bounds the scale from below, so eigenvalues near zero of a
    slice with large off-diagonal entries are not split by rounding noise.

    Returns clusters as sorted position lists, ordered by first position.
    """
    values = np.asarray(values, dtype=float)
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if floor is not None:
        scale = max(scale, floor)
    thresh = tol * scale
    order = np.argsort(values, kind="stable")
    clusters: list[list[int]] = []
    for pos in order:
        if clusters and values[pos] - values[clusters[-1][-1]] <= thresh:
            clusters[-1].append(int(pos))
        else:
            clusters.append([int(pos)])
    clusters = [sorted(c) for c in clusters]
    return sorted(clusters, key=lambda c: c[0])


def partition_signature(clusters) -> tuple[int, ...]:
    """Multiplicity partition as a descending tuple, e.g. ``(2, 2)``."""
    return tuple(sorted((len(c) for c in clusters), reverse=True))


@dataclass(frozen=True)
class EigenStructure:
    """Joint eigenstructure of the slices 2..K of a normalized core.

    ``A`` holds the independent eigenvectors found (first nonzero entry
    scaled to 1), one column per diagonal position when the slices are not
    defective. ``C`` has a first row of ones and the slice diagonals below.
    """

    eigenvalues: np.ndarray  # (K-1, R): row k-1 is the diagonal of slice k
    A: np.ndarray
    B: np.ndarray | None
    C: np.ndarray
    column_positions: tuple  # diagonal position each column of A belongs to
    slice_partitions: tuple  # per eigen-slice partition signature
    joint_partition: tuple
    joint_clusters: tuple
    defective: bool
    n_eigenvectors: int
    residuals: tuple = field(default=())  # |G_k A - A diag| / |G_k| per eigen-slice


def _leading_one(x: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(x) > 1e-12 * np.linalg.norm(x))
    return x / x[nz[0]] if nz.size else x


def _back_substitute(Tm: np.ndarray, i: int) -> np.ndarray:
    """Eigenvector of upper-triangular ``Tm`` for its simple diagonal entry ``i``."""
    R = Tm.shape[0]
    lam = Tm[i, i]
    x = np.zeros(R)
    x[i] = 1.0
    for j in range(i - 1, -1, -1):
        x[j] = -(Tm[j, j + 1:i + 1] @ x[j + 1:i + 1]) / (Tm[j, j] - lam)
    return x


def eigen_structure(
    core,
    coincidence_tol: float = DEFAULT_COINCIDENCE_TOL,
    null_tol: float = DEFAULT_NULL_TOL,
) -> EigenStructure:
    """Shared eigenvectors and eigenvalues of the triangular slices of a normalized core.

    Diagonal positions are grouped into joint clusters (positions that
    coincide, within ``coincidence_tol``, in every slice 2..K). A position
    that is simple in slice 2 gets its eigenvector by back-substitution;
    larger clusters get a basis of the common null space of
    ``G_k - lambda_k I`` over all slices, with singular values below
    ``null_tol`` (relative) counted as zero. Fewer than ``R`` vectors in
    total marks the structure as defective, and then ``B`` is ``None``.
    """
    Gc = core.G if isinstance(core, NormalizedCore) else _check_square_slices(core)
    R, _, K = Gc.shape
    if K < 2:
        raise InvalidArgument("need at least two slices")
    slices = [Gc[:, :, k] for k in range(1, K)]
    eig = np.array([np.diag(s).copy() for s in slices])

    per_slice = [
        multiplicity_partition(row, coincidence_tol, floor=float(np.linalg.norm(s)) / np.sqrt(R))
        for row, s in zip(eig, slices)
    ]
    labels = np.zeros((len(slices), R), dtype=int)
    for k, clusters in enumerate(per_slice):
        for cid, cl in enumerate(clusters):
            labels[k, cl] = cid
    joint: dict[tuple, list[int]] = {}
    for pos in range(R):
        joint.setdefault(tuple(labels[:, pos]), []).append(pos)
    joint_clusters = sorted(joint.values(), key=lambda c: c[0])

    simple_in_first = {c[0] for c in per_slice[0] if len(c) == 1}
    cols, positions = [], []
    for cl in joint_clusters:
        if len(cl) == 1 and cl[0] in simple_in_first:
            cols.append(_leading_one(_back_substitute(slices[0], cl[0])))
            positions.append(cl[0])
            continue
        lam = eig[:, cl].mean(axis=1)
        stack = np.vstack([s - l * np.eye(R) for s, l in zip(slices, lam)])
        _, sv, vt = np.linalg.svd(stack)
        scale = max(float(np.linalg.norm(stack, 2)), max(np.linalg.norm(s, 2) for s in slices), 1e-300)
        sv_full = np.zeros(R)
        sv_full[: sv.size] = sv
        null = [j for j in range(R) if sv_full[j] <= null_tol * scale]
        null = sorted(null, key=lambda j: sv_full[j])[: len(cl)]
        for j, pos in zip(sorted(null), cl):
            cols.append(_leading_one(vt[j]))
            positions.append(pos)

    A = np.column_stack(cols) if cols else np.zeros((R, 0))
    n_vec = A.shape[1]
    defective = n_vec < R or np.linalg.matrix_rank(A) < R
    B = None
    if not defective:
        B = np.linalg.inv(A).T
    C = np.vstack([np.ones(R), eig])

    residuals = []
    for k, s in enumerate(slices):
        lam_cols = eig[k, list(positions)]
        num = np.linalg.norm(s @ A - A * lam_cols[None, :])
        residuals.append(float(num / max(np.linalg.norm(s), 1e-300)))

    return EigenStructure(
        eigenvalues=eig,
        A=A,
        B=B,
        C=C,
        column_positions=tuple(positions),
        slice_partitions=tuple(partition_signature(c) for c in per_slice),
        joint_partition=partition_signature(joint_clusters),
        joint_clusters=tuple(tuple(c) for c in joint_clusters),
        defective=bool(defective),
        n_eigenvectors=int(np.linalg.matrix_rank(A)) if n_vec else 0,
        residuals=tuple(residuals),
    )


def _closed_form_checks(a, b, c, d, e, f):
    scale = max(abs(a), abs(b), abs(c), abs(d), abs(e), abs(f), 1.0)

    def require(val, what, degree=1):
        if not np.isfinite(val) or abs(val) <= 1e-14 * scale**degree:
            raise ClosedFormUndefined(f"{what} vanishes")

    require(a - b, "a - b")
    require(a - c, "a - c")
    require(b - c, "b - c")
    require(d, "d")
    require(e, "e")
    require(d * e + f * (c - b), "d*e + f*(c - b)", 2)
    require(d * e + f * (a - b), "d*e + f*(a - b)", 2)


def closed_form_eigenvectors(a, b, c, d, e, f) -> np.ndarray:
    """Eigenvectors of ``[[a, d, f], [0, b, e], [0, 0, c]]`` for ``a, b, c``, as columns."""
    _closed_form_checks(a, b, c, d, e, f)
    den = d * e + f * (c - b)
    return np.array([
        [1.0, 1.0, 1.0],
        [0.0, (b - a) / d, e * (c - a) / den],
        [0.0, 0.0, (c - a) * (c - b) / den],
    ])


def closed_form_inverse_columns(a, b, c, d, e, f) -> np.ndarray:
    """Columns of the inverse-transpose of :func:`closed_form_eigenvectors`, unscaled."""
    _closed_form_checks(a, b, c, d, e, f)
    return np.array([
        [1.0, 0.0, 0.0],
        [d / (a - b), d / (b - a), 0.0],
        [
            (d * e + f * (a - b)) / ((a - b) * (a - c)),
            d * e / ((a - b) * (c - b)),
            (d * e + f * (c - b)) / ((c - a) * (c - b)),
        ],
    ])


def closed_form_3x3(a, b, c, d, e, f) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvectors ``A`` and third-entry-normalized inverse-transpose ``B``.

    ``A`` has the eigenvectors for ``a, b, c`` as columns with leading entry
    1. ``B`` is ``A^{-T}`` with every column rescaled so its third entry is 1.

    Raises
    ------
    ClosedFormUndefined
        If two of ``a, b, c`` coincide or one of ``d``, ``e``,
        ``d e + f (c - b)``, ``d e + f (a - b)`` vanishes.
    """
    A = closed_form_eigenvectors(a, b, c, d, e, f)
    den1 = d * e + f * (a - b)
    B = np.array([
        [(a - b) * (a - c) / den1, 0.0, 0.0],
        [d * (a - c) / den1, (b - c) / e, 0.0],
        [1.0, 1.0, 1.0],
    ])
    return A, B


def zero_upper_positions(core, tol: float = 1e-6) -> list[tuple[int, int]]:
    """Strictly-upper positions (0-based) below ``tol * |G|`` in every slice 2..K."""
    Gc = core.G if isinstance(core, NormalizedCore) else np.asarray(core, dtype=float)
    R = Gc.shape[0]
    thresh = tol * frobenius_norm(Gc)
    out = []
    for i in range(R):
        for j in range(i + 1, R):
            if np.all(np.abs(Gc[i, j, 1:]) < thresh):
                out.append((i, j))
    return out


def zero_diagonal_positions(G, tol: float = 1e-6) -> list[int]:
    """Diagonal positions (0-based) below ``tol * |G|`` in every slice."""
    G = np.asarray(G, dtype=float)
    thresh = tol * frobenius_norm(G)
    return [i for i in range(G.shape[0]) if np.all(np.abs(G[i, i, :]) < thresh)]


def is_upper_triangular(G, tol: float = 1e-12) -> bool:
    G = np.asarray(G, dtype=float)
    return G.ndim == 3 and G.shape[0] == G.shape[1] and strictly_lower_norm(G) <= tol * max(frobenius_norm(G), 1e-300)

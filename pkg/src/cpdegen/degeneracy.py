"""Diverging component groups and their proportionality.

A group ``D`` of components diverges when every ``|w_r|``, ``r in D``,
blows up while the partial sum over ``D`` stays bounded. Only finite
sequences of snapshots are observable, so both properties are tested with
ratio thresholds:

* diverging: ``|w_r(last)| / |w_r(first)| > omega_growth``
* bounded: ``||group_sum(D)|| <= bound_ratio * ||evaluate(last)||`` at
  every snapshot

Candidates are grouped two ways, by the bounded-subset test and by
single-linkage clustering on ``|congruence| >= congruence_link``. The two
groupings are merged and each group records which tests it passes, so a
disagreement (bounded but not congruent, say) is visible in the report.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .cp import ComponentGroup, CpDecomposition, congruence_matrix, evaluate, group_sum
from .exceptions import InvalidArgument, UndefinedMetricError
from .sgsd import (
    eigen_structure,
    find_nonsingular_slicemix,
    is_upper_triangular,
    normalize_first_slice,
    partition_signature,
    sgsd_jacobi,
    zero_diagonal_positions,
    zero_upper_positions,
)
from .tensor import as_tensor3, frobenius_norm

DEFAULT_OMEGA_GROWTH = 1e2
DEFAULT_BOUND_RATIO = 10.0
DEFAULT_CONGRUENCE_LINK = 0.99
DEFAULT_TOL_PROP = 1e-2
MAX_SUBSET_CANDIDATES = 16
METRIC_SLACK = 1e-12

VERDICTS = ("proportional", "non-proportional", "undetermined")
SERIES_COLUMNS = ("n", "max_abs_omega", "group_sum_norm", "s2s1_A", "s2s1_B", "s2s1_C", "min_congruence")


def rank1_metric(M) -> float:
    """``sigma_2 / sigma_1`` of ``M``; 0 when ``M`` has a single singular value.

    Raises
    ------
    UndefinedMetricError
        If ``M`` is the zero matrix.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidArgument(f"rank1_metric needs a matrix, got ndim={M.ndim}")
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise UndefinedMetricError("sigma_2/sigma_1 is undefined for the zero matrix")
    if s.size < 2:
        return 0.0
    return float(s[1] / s[0])


def proportionality_verdict(s2s1_A, s2s1_B, s2s1_C, tol_prop: float = DEFAULT_TOL_PROP) -> str:
    """Verdict from the per-mode rank-1 metric series of one group.

    ``proportional`` when all three final metrics are below ``tol_prop`` and
    no series ever increases by more than ``METRIC_SLACK`` (rounding jitter
    of an exactly rank-1 matrix); ``non-proportional`` when some final
    metric is at or above ``tol_prop``; ``undetermined`` otherwise.
    """
    series = [np.asarray(m, dtype=float) for m in (s2s1_A, s2s1_B, s2s1_C)]
    if any(not np.all(m[-1:] < tol_prop) for m in series):
        return "non-proportional"
    if all(np.all(np.diff(m) <= METRIC_SLACK) for m in series):
        return "proportional"
    return "undetermined"


@dataclass(frozen=True)
class GroupRecord:
    group: ComponentGroup
    series: dict
    bounded: bool
    congruent: bool
    verdict: str

    @property
    def criteria_agree(self) -> bool:
        return self.bounded == self.congruent

    def to_dict(self) -> dict:
        return {
            "indices": list(self.group.indices),
            "bounded": self.bounded,
            "congruent": self.congruent,
            "criteria_agree": self.criteria_agree,
            "verdict": self.verdict,
            "series": {k: [float(v) for v in vals] for k, vals in self.series.items()},
        }


@dataclass(frozen=True)
class DivergenceReport:
    ns: tuple
    rank: int
    thresholds: dict
    candidates: tuple
    groups: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "ns": [float(n) for n in self.ns],
            "rank": self.rank,
            "thresholds": dict(self.thresholds),
            "candidates": list(self.candidates),
            "groups": [g.to_dict() for g in self.groups],
        }

    def rows(self):
        """CSV rows ``(group_label, n, max_abs_omega, ...)`` in group then n order."""
        for g in self.groups:
            for i in range(len(self.ns)):
                yield (g.group.label(),) + tuple(g.series[c][i] for c in SERIES_COLUMNS)


def _check_series(series) -> list[CpDecomposition]:
    series = list(series)
    if len(series) < 3:
        raise InvalidArgument(f"need at least 3 snapshots, got {len(series)}")
    R, dims = series[0].rank, series[0].shape
    for cp in series:
        if not isinstance(cp, CpDecomposition) or not cp.normalized:
            raise InvalidArgument("snapshots must be normalized CpDecomposition objects")
        if cp.rank != R or cp.shape != dims:
            raise InvalidArgument(
                f"inconsistent snapshots: rank {cp.rank} shape {cp.shape} vs rank {R} shape {dims}"
            )
    return series


def _metric_or_nan(M) -> float:
    try:
        return rank1_metric(M)
    except UndefinedMetricError:
        return float("nan")


def group_series(series, D, ns=None, factors=None) -> dict:
    """Per-snapshot measurements of group ``D`` (keys as in ``SERIES_COLUMNS``).

    The rank-1 metrics use the unit columns of the snapshots unless
    ``factors`` supplies one ``(A, B, C)`` triple per snapshot, e.g. the
    matrices of a constructed sequence before normalization.
    """
    series = _check_series(series)
    if factors is None:
        factors = [(cp.A, cp.B, cp.C) for cp in series]
    elif len(factors) != len(series):
        raise InvalidArgument("factors and series differ in length")
    D = D if isinstance(D, ComponentGroup) else ComponentGroup.of(D)
    D.check(series[0].rank)
    idx = list(D.indices)
    ns = list(range(len(series))) if ns is None else list(ns)
    out = {c: [] for c in SERIES_COLUMNS}
    for n, cp, (A, B, C) in zip(ns, series, factors):
        out["n"].append(float(n))
        out["max_abs_omega"].append(float(np.max(np.abs(cp.weights[idx]))))
        out["group_sum_norm"].append(frobenius_norm(group_sum(cp, D)))
        out["s2s1_A"].append(_metric_or_nan(np.asarray(A)[:, idx]))
        out["s2s1_B"].append(_metric_or_nan(np.asarray(B)[:, idx]))
        out["s2s1_C"].append(_metric_or_nan(np.asarray(C)[:, idx]))
        if len(idx) > 1:
            cong = np.abs(congruence_matrix(cp)[np.ix_(idx, idx)])
            out["min_congruence"].append(float(np.min(cong[np.triu_indices(len(idx), 1)])))
        else:
            out["min_congruence"].append(1.0)
    return {k: np.array(v) for k, v in out.items()}


def _link_clusters(cong: np.ndarray, members: list[int], link: float) -> list[list[int]]:
    parent = {m: m for m in members}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for r, s in combinations(members, 2):
        if abs(cong[r, s]) >= link:
            parent[find(r)] = find(s)
    clusters: dict[int, list[int]] = {}
    for m in members:
        clusters.setdefault(find(m), []).append(m)
    return [sorted(c) for c in clusters.values()]


def _bounded(series, idx, bound) -> bool:
    return all(frobenius_norm(group_sum(cp, idx)) <= bound for cp in series)


def detect_groups(
    series: Sequence[CpDecomposition],
    ns=None,
    omega_growth: float = DEFAULT_OMEGA_GROWTH,
    bound_ratio: float = DEFAULT_BOUND_RATIO,
    congruence_link: float = DEFAULT_CONGRUENCE_LINK,
    tol_prop: float = DEFAULT_TOL_PROP,
    factors=None,
) -> DivergenceReport:
    """Find diverging component groups along a sequence of normalized snapshots.

    Parameters
    ----------
    series : sequence of CpDecomposition
        At least three normalized snapshots with a common rank and shape,
        ordered by increasing ``n``.
    ns : sequence of float, optional
        The ``n`` value of each snapshot, used only for reporting.
    omega_growth, bound_ratio, congruence_link, tol_prop : float
        Divergence ratio, boundedness ratio, congruence linkage level and
        proportionality threshold.
    factors : sequence of (A, B, C), optional
        Passed to :func:`group_series` for the rank-1 metrics.

    Returns
    -------
    DivergenceReport
        Pairwise disjoint groups of at least two components each.
    """
    series = _check_series(series)
    if ns is not None and len(ns) != len(series):
        raise InvalidArgument("ns and series differ in length")
    R = series[0].rank
    first = np.abs(series[0].weights)
    last = np.abs(series[-1].weights)
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.where(first > 0, last / np.where(first > 0, first, 1.0), np.where(last > 0, np.inf, 0.0))
    candidates = [int(r) for r in np.flatnonzero(growth > omega_growth)]

    bound = bound_ratio * frobenius_norm(evaluate(series[-1]))
    bounded_sets: list[list[int]] = []
    if len(candidates) <= MAX_SUBSET_CANDIDATES:
        taken: set[int] = set()
        for size in range(2, len(candidates) + 1):
            for sub in combinations(candidates, size):
                if taken.intersection(sub):
                    continue
                if _bounded(series, list(sub), bound):
                    bounded_sets.append(list(sub))
                    taken.update(sub)

    cong = congruence_matrix(series[-1])
    linked = [c for c in _link_clusters(cong, candidates, congruence_link) if len(c) >= 2]

    # merge both groupings into disjoint groups
    merged: list[set[int]] = []
    for block in bounded_sets + linked:
        block = set(block)
        for other in [m for m in merged if m & block]:
            block |= other
            merged.remove(other)
        merged.append(block)
    merged.sort(key=min)

    groups = []
    for block in merged:
        D = ComponentGroup.of(block)
        s = group_series(series, D, ns, factors)
        congruent = bool(np.all(np.abs(cong[np.ix_(D.indices, D.indices)]) >= congruence_link))
        verdict = proportionality_verdict(s["s2s1_A"], s["s2s1_B"], s["s2s1_C"], tol_prop)
        groups.append(GroupRecord(D, s, _bounded(series, list(D.indices), bound), congruent, verdict))

    thresholds = {
        "omega_growth": omega_growth,
        "bound_ratio": bound_ratio,
        "congruence_link": congruence_link,
        "tol_prop": tol_prop,
    }
    ns_out = tuple(float(n) for n in (ns if ns is not None else range(len(series))))
    return DivergenceReport(ns_out, R, thresholds, tuple(candidates), tuple(groups))


@dataclass(frozen=True)
class EigenPattern:
    """Eigenvalue pattern of a boundary tensor's normalized triangular core.

    ``status`` is ``"ok"``, ``"unavailable"`` (no nonsingular slicemix
    within the condition cap) or ``"not_computed"`` (no limit supplied).
    Positions are 0-based.
    """

    status: str
    partition: tuple | None = None
    slice_partitions: tuple | None = None
    zero_upper: tuple = ()
    zero_diagonal: tuple = ()
    defective: bool | None = None
    sgsd_residual: float | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "partition": None if self.partition is None else list(self.partition),
            "slice_partitions": None if self.slice_partitions is None else [list(p) for p in self.slice_partitions],
            "zero_upper": [list(p) for p in self.zero_upper],
            "zero_diagonal": list(self.zero_diagonal),
            "defective": self.defective,
            "sgsd_residual": self.sgsd_residual,
        }


def eigen_pattern(limit, R: int, cond_cap: float = 1e8, seed: int = 0) -> EigenPattern:
    """Triangularize ``limit`` to an ``R x R`` core and read off its eigenvalue pattern.

    A limit that already is an ``R x R x K`` array with upper triangular
    slices is used as the core directly.
    """
    X = as_tensor3(limit, "limit")
    if X.shape[:2] == (R, R) and is_upper_triangular(X):
        G, residual = X, 0.0
    else:
        schur = sgsd_jacobi(X, R, seed=seed)
        G, residual = schur.G, schur.below_diag_residual
    zdiag = tuple(zero_diagonal_positions(G, 1e-6)) if frobenius_norm(G) > 0 else ()
    mix = find_nonsingular_slicemix(G, cond_cap=cond_cap, seed=seed)
    if mix is None:
        return EigenPattern("unavailable", zero_diagonal=zdiag, sgsd_residual=residual)
    core = normalize_first_slice(G, mix)
    es = eigen_structure(core)
    return EigenPattern(
        "ok",
        partition=partition_signature(es.joint_clusters),
        slice_partitions=tuple(es.slice_partitions),
        zero_upper=tuple(zero_upper_positions(core)),
        zero_diagonal=zdiag,
        defective=es.defective,
        sgsd_residual=residual,
    )


@dataclass(frozen=True)
class GroupClassification:
    verdict: str
    pattern: EigenPattern
    final_metrics: tuple
    tol_prop: float


def classify_group(
    series, D, limit=None, ns=None, tol_prop: float = DEFAULT_TOL_PROP, seed: int = 0, factors=None,
) -> GroupClassification:
    """Proportionality verdict for group ``D`` plus the eigenvalue pattern of its limit.

    Parameters
    ----------
    series : sequence of CpDecomposition
        Normalized snapshots in increasing ``n`` order.
    D : ComponentGroup or iterable of int
    limit : array, optional
        The boundary tensor the group's partial sums converge to. Without
        it the pattern status is ``"not_computed"``.
    factors : sequence of (A, B, C), optional
        Passed to :func:`group_series` for the rank-1 metrics.
    """
    s = group_series(series, D, ns, factors)
    verdict = proportionality_verdict(s["s2s1_A"], s["s2s1_B"], s["s2s1_C"], tol_prop)
    D = D if isinstance(D, ComponentGroup) else ComponentGroup.of(D)
    pattern = EigenPattern("not_computed") if limit is None else eigen_pattern(limit, len(D), seed=seed)
    finals = (float(s["s2s1_A"][-1]), float(s["s2s1_B"][-1]), float(s["s2s1_C"][-1]))
    return GroupClassification(verdict, pattern, finals, tol_prop)

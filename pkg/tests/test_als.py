import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdegen.als import fit_als, swamp_metrics
from cpdegen.cp import CpDecomposition, evaluate
from cpdegen.exceptions import InvalidArgument
from cpdegen.families import family_r3
from cpdegen.tensor import frobenius_norm

from .conftest import random_orthonormal


def _well_separated(rng, dims=(5, 4, 6), R=3):
    # orthonormal columns in two modes keep the components far apart
    A = random_orthonormal(rng, dims[0], R)
    B = random_orthonormal(rng, dims[1], R)
    C = rng.standard_normal((dims[2], R))
    return evaluate(CpDecomposition.absorbed(A, B, C * np.array([3.0, 2.0, 1.0])))


def test_recovers_exact_low_rank_hosvd(rng):
    Z = _well_separated(rng)
    trace = fit_als(Z, 3, max_iters=2000, rel_tol=1e-14, init="hosvd")
    assert trace.fit_errors[-1] / frobenius_norm(Z) < 1e-6
    assert trace.reason in ("converged", "exact")


def test_recovers_exact_low_rank_best_random_start(rng):
    Z = _well_separated(rng)
    errs = [fit_als(Z, 3, max_iters=2000, rel_tol=1e-14, seed=s).fit_errors[-1] for s in range(3)]
    assert min(errs) / frobenius_norm(Z) < 1e-6
    # seed 0 stalls at a saddle that drops the weight-3.098 component
    assert errs[0] == pytest.approx(3.09819628, rel=1e-6)


def test_zero_tensor():
    trace = fit_als(np.zeros((3, 3, 2)), 2, max_iters=10)
    assert trace.fit_errors[0] == 0.0
    np.testing.assert_array_equal(trace.weights[0], 0.0)
    assert trace.reason == "exact" and len(trace) == 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_fit_error_never_increases(seed, R):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((4, 3, 3))
    trace = fit_als(Z, R, max_iters=60, rel_tol=0.0, seed=seed)
    assert np.all(np.diff(trace.fit_errors) <= 1e-12 * trace.norm_Z)
    assert len(trace) <= 60


def test_final_cp_reproduces_last_fit(rng):
    Z = rng.standard_normal((4, 4, 3))
    trace = fit_als(Z, 2, max_iters=100, seed=4)
    err = frobenius_norm(Z - evaluate(trace.final))
    assert err == pytest.approx(trace.fit_errors[-1], abs=1e-10)
    np.testing.assert_allclose(trace.final.weights, trace.weights[-1])


def test_bit_reproducible(rng):
    Z = rng.standard_normal((3, 4, 3))
    t1 = fit_als(Z, 2, max_iters=50, seed=9)
    t2 = fit_als(Z, 2, max_iters=50, seed=9)
    np.testing.assert_array_equal(t1.fit_errors, t2.fit_errors)
    np.testing.assert_array_equal(t1.weights, t2.weights)
    t3 = fit_als(Z, 2, max_iters=50, seed=10)
    assert not np.array_equal(t1.weights[0], t3.weights[0])


def test_max_iters_reason_and_csv_layout(rng):
    Z = rng.standard_normal((3, 3, 3))
    trace = fit_als(Z, 3, max_iters=5, rel_tol=0.0)
    assert trace.reason == "max_iters" and len(trace) == 5
    assert trace.csv_header() == ["iter", "fit_error", "omega_1", "omega_2", "omega_3", "min_congruence", "max_abs_omega"]
    rows = list(trace.csv_rows())
    assert [r[0] for r in rows] == [1, 2, 3, 4, 5]
    assert all(len(r) == 7 for r in rows)


def test_invalid_options(rng):
    Z = rng.standard_normal((2, 2, 2))
    for kwargs in ({"R": 0}, {"R": 1.5}, {"R": 1, "max_iters": 0}, {"R": 1, "rel_tol": -1.0}, {"R": 1, "init": "svd"}):
        with pytest.raises(InvalidArgument):
            fit_als(Z, **kwargs)


def test_swamp_metrics_constant_trace():
    Z = np.zeros((2, 2, 2))
    Z[0, 0, 0] = 1.0
    trace = fit_als(Z, 1, max_iters=20, rel_tol=0.0)
    m = swamp_metrics(trace, window=10)
    assert m.weight_growth_rate == pytest.approx(0.0, abs=1e-12)
    assert m.fit_decay_rate == pytest.approx(0.0, abs=1e-12)
    assert m.window == min(10, len(trace))
    assert swamp_metrics(trace, window=1000).window == len(trace)
    with pytest.raises(InvalidArgument):
        swamp_metrics(trace, window=0)


def test_swamp_metrics_benign_fit(rng):
    trace = fit_als(_well_separated(rng), 3, max_iters=200, rel_tol=0.0, init="hosvd")
    m = swamp_metrics(trace)
    assert abs(m.weight_growth_rate) < 1e-6
    assert m.fit_decay_rate >= 0.0


def test_swamp_on_boundary_tensor():
    trace = fit_als(family_r3().limit, 3, max_iters=3000, rel_tol=0.0, seed=0)
    m = swamp_metrics(trace, window=500)
    assert m.weight_growth_rate > 0
    assert m.fit_decay_rate > 0
    assert trace.fit_errors[-1] > 0
    assert trace.max_abs_omega[-1] > trace.max_abs_omega[100]

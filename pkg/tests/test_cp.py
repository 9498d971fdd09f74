import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdegen.cp import (
    ComponentGroup,
    CpDecomposition,
    congruence,
    congruence_matrix,
    evaluate,
    from_rank1_terms,
    group_sum,
    normalize,
)
from cpdegen.exceptions import ContractViolation, DegenerateComponentError, InvalidArgument

from .conftest import brute_cp


def _random_cp(rng, dims=(4, 3, 5), R=3):
    return CpDecomposition.absorbed(*(rng.standard_normal((d, R)) for d in dims))


def test_evaluate_matches_outer_products(rng):
    cp = _random_cp(rng)
    np.testing.assert_allclose(evaluate(cp), brute_cp(cp.A, cp.B, cp.C), rtol=1e-13, atol=1e-13)


def test_evaluate_uses_weights(rng):
    A = np.eye(2)
    cp = CpDecomposition(A, A, A, np.array([2.0, -3.0]))
    Y = evaluate(cp)
    assert Y[0, 0, 0] == 2.0 and Y[1, 1, 1] == -3.0
    assert np.count_nonzero(Y) == 2


def test_normalized_requires_unit_columns():
    with pytest.raises(ContractViolation):
        CpDecomposition(np.ones((2, 1)), np.ones((2, 1)), np.ones((2, 1)), [1.0])


def test_component_count_mismatch():
    with pytest.raises(InvalidArgument):
        CpDecomposition.absorbed(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)))


def test_arrays_are_read_only(rng):
    cp = _random_cp(rng)
    with pytest.raises(ValueError):
        cp.A[0, 0] = 1.0


def test_normalize_preserves_tensor_and_signs(rng):
    cp = _random_cp(rng)
    ncp = normalize(cp)
    assert ncp.normalized
    np.testing.assert_allclose(evaluate(ncp), evaluate(cp), rtol=1e-12, atol=1e-12)
    for M in (ncp.A, ncp.B, ncp.C):
        np.testing.assert_allclose(np.linalg.norm(M, axis=0), 1.0, atol=1e-14)
        piv = M[np.argmax(np.abs(M), axis=0), np.arange(M.shape[1])]
        assert np.all(piv > 0)


def test_normalize_weight_is_product_of_norms():
    A = np.array([[3.0], [4.0]])
    B = np.array([[0.0], [-2.0]])
    C = np.array([[1.0], [0.0]])
    ncp = normalize(CpDecomposition.absorbed(A, B, C))
    # |a| = 5, |b| = 2 with the sign of b moved into the weight
    assert ncp.weights[0] == pytest.approx(-10.0)
    np.testing.assert_allclose(ncp.B[:, 0], [0.0, 1.0])


def test_normalize_zero_column():
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DegenerateComponentError):
        normalize(CpDecomposition.absorbed(A, np.eye(2), np.eye(2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalize_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    ncp = normalize(_random_cp(rng))
    twice = normalize(ncp)
    np.testing.assert_allclose(twice.weights, ncp.weights, rtol=1e-13)
    np.testing.assert_allclose(twice.A, ncp.A, atol=1e-14)


def test_congruence_values():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    s = 1 / np.sqrt(2)
    A = np.column_stack([e1, e1, np.array([s, s])])
    cp = CpDecomposition(A, A, A, np.ones(3))
    assert congruence(cp, 0, 1) == pytest.approx(1.0)
    assert congruence(cp, 0, 2) == pytest.approx(s**3)
    M = congruence_matrix(cp)
    np.testing.assert_allclose(np.diag(M), 1.0)
    assert M[1, 2] == pytest.approx(s**3)


def test_congruence_errors(rng):
    cp = normalize(_random_cp(rng))
    with pytest.raises(InvalidArgument):
        congruence(cp, 1, 1)
    with pytest.raises(InvalidArgument):
        congruence(cp, 0, 3)
    with pytest.raises(ContractViolation):
        congruence(_random_cp(rng), 0, 1)


def test_group_sum_partitions_evaluate(rng):
    cp = _random_cp(rng, R=4)
    total = group_sum(cp, [0, 2]) + group_sum(cp, ComponentGroup.of([1, 3]))
    np.testing.assert_allclose(total, evaluate(cp), rtol=1e-12, atol=1e-12)
    with pytest.raises(InvalidArgument):
        group_sum(cp, [4])


def test_component_group_validation():
    assert ComponentGroup.of([3, 1, 1]).indices == (1, 3)
    assert ComponentGroup.of([2, 0, 1]).label() == "0-1-2"
    with pytest.raises(InvalidArgument):
        ComponentGroup(())
    with pytest.raises(InvalidArgument):
        ComponentGroup((2, 1))
    with pytest.raises(InvalidArgument):
        ComponentGroup.of([-1])


def test_from_rank1_terms():
    cp = from_rank1_terms([([1.0, 0.0], [1.0], [2.0]), ([0.0, 1.0], [3.0], [1.0])])
    np.testing.assert_allclose(evaluate(cp)[:, 0, 0], [2.0, 3.0])

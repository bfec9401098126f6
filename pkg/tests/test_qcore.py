import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cseu import qcore
from cseu.qcore import DensityOp, DimensionError, PureState


def _rng(seed=0):
    return np.random.default_rng(seed)


def _rand(shape, rng):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_pure_state_rejects_unnormalized():
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 1.0]))


def test_density_op_validation():
    with pytest.raises(ValueError):
        DensityOp(np.diag([0.7, 0.7]))
    with pytest.raises(ValueError):
        DensityOp(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        DensityOp(np.diag([1.5, -0.5]))
    rho = DensityOp(np.eye(4) / 4)
    assert rho.purity == pytest.approx(0.25)


@given(st.integers(0, 10_000))
def test_partial_trace_of_product(seed):
    rng = _rng(seed)
    a, b = _rand((2, 2), rng), _rand((3, 3), rng)
    ab = qcore.tensor_product(a, b)
    np.testing.assert_allclose(qcore.partial_trace(ab, 0, [2, 3]), a * np.trace(b), atol=1e-10)
    np.testing.assert_allclose(qcore.partial_trace(ab, 1, [2, 3]), b * np.trace(a), atol=1e-10)


@given(st.integers(0, 10_000))
def test_partial_transpose_and_permutation(seed):
    rng = _rng(seed)
    a, b, c = _rand((2, 2), rng), _rand((3, 3), rng), _rand((2, 2), rng)
    abc = qcore.tensor_product(a, b, c)
    np.testing.assert_allclose(qcore.partial_transpose(abc, 1, [2, 3, 2]), qcore.tensor_product(a, b.T, c), atol=1e-10)
    np.testing.assert_allclose(qcore.permute_systems(abc, [2, 0, 1], [2, 3, 2]), qcore.tensor_product(b, c, a), atol=1e-10)


def test_permutation_operator_swap_and_sym_projector():
    swap = qcore.permutation_operator((1, 0), d=2)
    v = np.kron([1, 0], [0, 1])
    np.testing.assert_allclose(swap @ v, np.kron([0, 1], [1, 0]))
    for t, d in ((2, 2), (3, 2), (2, 3)):
        p = qcore.sym_projector(t, d)
        np.testing.assert_allclose(p @ p, p, atol=1e-12)
        assert np.trace(p).real == pytest.approx(qcore.sym_dim(t, d))
        assert qcore.sym_dim(t, d) == math.comb(t + d - 1, t)


def test_compose_and_cycles():
    # cycles are written 1-based
    p = qcore.perm_from_cycles([[1, 2, 3]], 3)
    assert p == (1, 2, 0)
    assert qcore.compose(p, qcore.compose(p, p)) == (0, 1, 2)


def test_embed_matches_kron():
    rng = _rng(1)
    x = _rand((2, 2), rng)
    np.testing.assert_allclose(qcore.embed(x, [1], 3, 2), np.kron(np.kron(np.eye(2), x), np.eye(2)))


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4, 8]))
def test_haar_unitary_is_unitary(seed, d):
    u = qcore.haar_unitary(d, _rng(seed)).matrix
    np.testing.assert_allclose(u @ u.conj().T, np.eye(d), atol=1e-10)


def test_haar_states_uniform_first_moment():
    v = qcore.haar_state_vectors(50_000, 3, _rng(2))
    mean = np.einsum("na,nb->ab", v, v.conj()) / len(v)
    np.testing.assert_allclose(mean, np.eye(3) / 3, atol=0.01)


def test_choi_of_unitary_is_rank_one_with_trace_d():
    u = qcore.haar_unitary(3, _rng(3)).matrix
    y = qcore.choi_of_unitary(u).matrix
    np.testing.assert_allclose(y @ y, 3 * y, atol=1e-10)
    assert np.trace(y).real == pytest.approx(3)


@given(st.integers(0, 10_000))
def test_operator_norm(seed):
    m = _rand((4, 4), _rng(seed))
    assert qcore.operator_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        qcore.partial_trace(np.eye(5), 0, [2, 2])
    with pytest.raises(DimensionError):
        qcore.partial_transpose(np.ones((2, 3)), 0, [2])
    with pytest.raises(ValueError):
        qcore.perm_from_cycles([[1, 5]], 3)

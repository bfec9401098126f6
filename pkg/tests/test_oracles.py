import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cseu import oracles
from cseu.ensembles import random_observable
from cseu.qcore import DimensionError, haar_state_vectors, haar_unitary

C1 = 1.0  # bound shapes are tested with the constant set to one


def _instance(d, seed, B=1.0):
    rng = np.random.default_rng(seed)
    u = haar_unitary(d, rng).matrix
    o = random_observable(d, B, rng, "gue").matrix
    v = haar_state_vectors(1, d, rng)[0]
    return u, (o, np.outer(v, v.conj()))


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4]))
def test_choi_duality(seed, d):
    u, task = _instance(d, seed)
    assert oracles.choi_duality_value(u, task) == pytest.approx(oracles.exact_linear_expectation(u, task), abs=1e-10)


def test_conditional_outcome_mean_frozen():
    np.testing.assert_allclose(oracles.conditional_outcome_mean(np.array([1, 0]), 2, 1), np.diag([2 / 3, 1 / 3]))
    with pytest.raises(DimensionError):
        oracles.conditional_outcome_mean(np.array([1, 0, 0]), 2, 1)


@pytest.mark.parametrize("d,s", [(2, 1), (2, 3), (4, 2)])
def test_moment_operator_normalization(d, s):
    u = haar_unitary(d, np.random.default_rng(d + s)).matrix
    first = oracles.first_moment_matrix(u, d, s).matrix
    assert np.trace(first).real == pytest.approx(1)
    assert np.min(np.linalg.eigvalsh(first)) > -1e-12
    if d == 2:
        second = oracles.second_moment_matrix(u, d, s).matrix
        assert np.trace(second).real == pytest.approx(1)


@pytest.mark.parametrize("d,s", [(2, 1), (2, 2), (4, 1)])
def test_x_tensor_x_routes_agree_and_marginalize(d, s):
    u = haar_unitary(d, np.random.default_rng(7)).matrix
    m4 = oracles.x_tensor_x_moment(u, d, s).matrix
    np.testing.assert_allclose(m4, oracles.x_tensor_x_from_second_moment(u, d, s), atol=1e-9)
    # tracing one copy of E[X (x) X] leaves d * E[X] = d * Choi(U)
    dd = d * d
    marg = np.einsum("aibi->ab", m4.reshape(dd, dd, dd, dd))
    y = np.outer(u.reshape(-1), u.reshape(-1).conj())
    np.testing.assert_allclose(marg, d * y, atol=1e-9)


def test_linear_variance_worst_case_matches_exact():
    d, s, B = 4, 2, 4.0
    u = haar_unitary(d, np.random.default_rng(1)).matrix
    v = haar_state_vectors(1, d, np.random.default_rng(2))[0]
    task = (math.sqrt(B / d) * np.eye(d), np.outer(v, v.conj()))
    assert oracles.exact_variance_linear(u, task, d, s) == pytest.approx(oracles.linear_variance_worst_case(d, s, B), rel=1e-9)


def test_exact_variance_decreases_and_validates():
    u, task = _instance(2, 3, B=2.0)
    qs = [2, 4, 8, 16, 64]
    curve = oracles.exact_variance_curve(u, task, 2, 1, qs)
    assert np.all(np.diff(curve) < 0)
    assert curve[-1] * 64 < curve[0] * 2  # faster than 1/q at small q
    assert oracles.exact_variance_Z(u, task, 2, 1, 8) == pytest.approx(curve[2])
    with pytest.raises(ValueError):
        oracles.exact_variance_Z(u, task, 2, 1, 1)
    with pytest.raises(DimensionError):
        oracles.exact_variance_Z(haar_unitary(3, np.random.default_rng(0)).matrix, (np.eye(3), np.eye(3) / 3), 3, 1, 4)


def test_covariance_cases_keys():
    u, task = _instance(2, 4)
    cases = oracles.covariance_cases(u, task, 1)
    assert set(cases) == {"one_same", "one_diff", "both_swap", "both_same"}
    bounds = oracles.covariance_case_bounds(2, 1, 1.0, 1.0, C=C1)
    assert set(bounds) == set(cases)


def test_prop1_bound_frozen():
    # (d p / s + min(1, B p)) / q + (d^4/s^4 + 1) B p / q^2 at d=2, s=1, q=100, B=p=1
    assert oracles.prop1_bound(2, 1, 100, 1.0, 1.0, C=C1) == pytest.approx(0.03 + 17 / 10_000)
    assert oracles.prop1_bound(2, 1, 100, 1.0, 1.0, C=3.0) == pytest.approx(3 * 0.0317)
    with pytest.raises(ValueError):
        oracles.prop1_bound(2, 1, 0, 1.0, 1.0)


@given(st.integers(1, 200), st.floats(1e-4, 0.5))
def test_median_batches_formula(M, delta):
    R = oracles.median_batches(M, delta)
    D = oracles.kl_bernoulli(0.5, 0.75)
    assert D == pytest.approx(0.5 * math.log(4 / 3))
    assert R >= math.log(M / delta) / D
    assert R - 1 < math.log(M / delta) / D or R == 1


def test_median_batches_frozen():
    assert oracles.median_batches(16, 0.05) == 41
    assert oracles.median_batches(1, 0.05) == 21


def test_query_budgets_frozen():
    # q = ceil(C (max(d/s,1)/eps^2 + sqrt(B) max(d^2/s^2,1)/eps)) at C=1, d=2, s=1, B=1, eps=0.1 -> 200 + 40
    assert oracles.accuracy_batch_size(2, 1, 1.0, 0.1, C=C1) == 240
    assert oracles.thm1_query_budget(2, 1, 1.0, 16, 0.1, 0.05, C=C1) == 240 * 41
    # m s = C (max(d^2/s, s)/eps^2 + max(d^3/s, d s)/eps) = 400 + 80 at d=2, s=1, eps=0.1
    assert oracles.otoc_query_budget(2, 1, 0.1, C=C1) == 480


def test_avgcase_bound_and_snapshot_count():
    with pytest.raises(ValueError):
        oracles.avgcase_variance_bound(2, 3, 1, 1.0, 100)
    with pytest.raises(ValueError):
        oracles.avgcase_variance_bound(2, 1, 3, 1.0, 100)
    m = oracles.avgcase_snapshot_count(2, 1, 2, 2.0, 0.5, 0.1, C=C1)
    target = 0.1 * 0.25 / 4
    assert oracles.avgcase_variance_bound(2, 1, 2, 2.0, m, C=C1) <= target
    assert oracles.avgcase_variance_bound(2, 1, 2, 2.0, m - 1, C=C1) > target


def test_otoc_variance_bound_shape():
    b = [oracles.otoc_variance_bound(4, 1, m, C=C1) for m in (10, 100, 1000)]
    assert b[0] > b[1] > b[2]
    assert oracles.otoc_variance_bound(2, 1, 10, C=C1) == pytest.approx(5 / 10 + 4 * 17 / 100)


def test_calibrated_constants_loaded():
    from cseu import constants

    table = constants.load()
    assert table["version"] == 1
    for key in ("C_variance", "C_otoc", "C_query", "C_otoc_budget"):
        assert table[key] > 1.0
    # budget constants are the smallest K with C (2/K + 2/K^2) <= target
    K, C = table["C_query"], table["C_variance"]
    assert C * (2 / K + 2 / K**2) == pytest.approx(0.25)
    K, C = table["C_otoc_budget"], table["C_otoc"]
    assert C * (2 / K + 2 / K**2) == pytest.approx(0.1)

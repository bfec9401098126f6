import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from cseu import clifford
from cseu.estimator import snapshot_coefficients
from cseu.measurement import (
    SHADOW_MAGIC,
    CollectiveMeasurementSpec,
    ShadowData,
    Snapshot,
    collective_outcomes,
    learning_round,
    rgcm_outcomes,
    run_learning,
    sample_collective_outcome,
    sample_rgcm_outcome,
)
from cseu.qcore import haar_state_vectors, haar_unitary


@pytest.mark.parametrize("d,s,a,b", [(2, 1, 18.0, 4.0), (2, 2, 12.0, 2.5), (4, 4, 40.0, 2.25)])
def test_snapshot_coefficients_frozen(d, s, a, b):
    assert snapshot_coefficients(d, s) == pytest.approx((a, b))


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4]), st.integers(1, 5))
def test_snapshot_trace_is_d(seed, d, s):
    # a - b d^2 = d for every (d, s), so Tr X = Tr Choi(U) = d
    rng = np.random.default_rng(seed)
    psi, phi = haar_state_vectors(2, d, rng)
    x = Snapshot(psi, phi, s).dense()
    assert np.trace(x).real == pytest.approx(d)
    np.testing.assert_allclose(x, x.conj().T, atol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        CollectiveMeasurementSpec(0)
    with pytest.raises(ValueError):
        CollectiveMeasurementSpec(2, "rgcm")
    with pytest.raises(ValueError):
        CollectiveMeasurementSpec(1, "projective")


@pytest.mark.parametrize("d,s", [(2, 1), (3, 2), (4, 3), (8, 1)])
def test_overlap_is_beta(d, s):
    rng = np.random.default_rng(10 * d + s)
    out = haar_state_vectors(1, d, rng)[0]
    phi = collective_outcomes(np.tile(out, (20_000, 1)), s, rng)
    np.testing.assert_allclose(np.linalg.norm(phi, axis=1), 1, atol=1e-12)
    x = np.abs(phi.conj() @ out) ** 2
    assert sps.kstest(x, sps.beta(s + 1, d - 1).cdf).pvalue > 1e-3


def test_single_outcome_helpers_return_states():
    rng = np.random.default_rng(0)
    out = haar_state_vectors(1, 4, rng)[0]
    assert sample_collective_outcome(out, 2, rng).dim == 4
    assert sample_rgcm_outcome(out, rng).dim == 4
    snap = learning_round(np.eye(4), CollectiveMeasurementSpec(2), rng)
    assert snap.d == 4 and snap.s == 2


@pytest.mark.parametrize("n", [1, 2])
def test_rgcm_marginal_matches_explicit_circuit(n):
    # the circuit average over the whole group equals (d/K)|<phi|out>|^2
    d = 2**n
    rng = np.random.default_rng(n)
    group = clifford.enumerate_group(n)
    stab = clifford.stabilizer_states(n)
    out = haar_state_vectors(1, d, rng)[0]
    exact = np.zeros(len(stab))
    for v in group:
        probs = np.abs(v @ out) ** 2
        for b in range(d):
            k = np.argmax(np.abs(stab.conj() @ v.conj()[b]))
            exact[k] += probs[b] / len(group)
    np.testing.assert_allclose(exact, d / len(stab) * np.abs(stab.conj() @ out) ** 2, atol=1e-12)
    phi = rgcm_outcomes(np.tile(out, (30_000, 1)), rng)
    idx = np.argmax(np.abs(phi @ stab.conj().T), axis=1)
    counts = np.bincount(idx, minlength=len(stab))
    keep = exact > 1e-9
    assert sps.chisquare(counts[keep], exact[keep] / exact[keep].sum() * counts.sum()).pvalue > 1e-3


def test_rgcm_explicit_cliffords_route():
    rng = np.random.default_rng(3)
    out = np.tile(np.array([1, 0], dtype=complex), (500, 1))
    cl = clifford.random_clifford_batch(1, 500, rng)
    phi = rgcm_outcomes(out, rng, cl)
    stab = clifford.stabilizer_states(1)
    assert np.allclose(np.max(np.abs(phi @ stab.conj().T), axis=1), 1)


def _shadow(m=1300, s=2, d=4, seed=5, threads=1, block_size=512):
    u = haar_unitary(d, np.random.default_rng(99)).matrix
    return run_learning(u, CollectiveMeasurementSpec(s), m, seed, "haar:test", threads=threads, block_size=block_size)


def test_run_learning_deterministic_and_thread_invariant():
    a, b = _shadow(), _shadow(threads=3)
    assert a.to_bytes() == b.to_bytes()
    assert not np.array_equal(a.phi, _shadow(seed=6).phi)
    assert a.m == 1300 and a.d == 4 and a.s == 2 and a.queries == 2600


def test_shadow_roundtrip(tmp_path):
    sd = _shadow(m=70)
    path = tmp_path / "s.bin"
    sd.save(path)
    back = ShadowData.load(path)
    np.testing.assert_array_equal(back.psi, sd.psi)
    np.testing.assert_array_equal(back.phi, sd.phi)
    assert back.header() == sd.header()
    raw = path.read_bytes()
    assert raw.startswith(SHADOW_MAGIC)
    (n,) = struct.unpack("<I", raw[8:12])
    head = json.loads(raw[12 : 12 + n])
    assert head["m"] == 70 and head["d"] == 4 and head["s"] == 2 and head["seed"] == 5
    assert len(raw) == 12 + n + 70 * 2 * 4 * 16


def test_shadow_rejects_bad_input():
    sd = _shadow(m=10)
    raw = sd.to_bytes()
    with pytest.raises(ValueError):
        ShadowData.from_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError):
        ShadowData.from_bytes(raw[:-16])
    with pytest.raises(ValueError):
        ShadowData(np.zeros((3, 2)), np.zeros((3, 4)), CollectiveMeasurementSpec())


def test_subset_and_iteration():
    sd = _shadow(m=20)
    sub = sd.subset(5, 9)
    assert sub.m == 4
    np.testing.assert_array_equal(sub[0].phi, sd[5].phi)
    assert sum(1 for _ in sd) == 20


def test_rgcm_learning_uses_stabilizer_inputs():
    u = clifford.random_clifford_matrix(2, np.random.default_rng(1))
    sd = run_learning(u, CollectiveMeasurementSpec(1, "rgcm"), 50, 0)
    stab = clifford.stabilizer_states(2)
    assert np.allclose(np.max(np.abs(sd.psi @ stab.conj().T), axis=1), 1)
    assert np.allclose(np.max(np.abs(sd.phi @ stab.conj().T), axis=1), 1)

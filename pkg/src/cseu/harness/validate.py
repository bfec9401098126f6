"""Oracle-vs-simulation checks, runnable from the CLI (`validate`) and from tests."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from .. import clifford, oracles
from ..ensembles import stabilizer_ensemble, verify_design
from ..estimator import PredictionTask, linear_single, quadratic_pair, batch_mean
from ..measurement import CollectiveMeasurementSpec, ShadowData, collective_outcomes, run_learning, sample_rounds
from ..otoc import OtocTask, exact_otoc, otoc_pair_dense, otoc_pair_value
from ..qcore import haar_state_vectors
from ..rng import stream
from . import experiments as X
from .stats import ks_test, max_z, mean_se, variance_se


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def __post_init__(self):
        self.detail = _plain(self.detail)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name} {self.detail}"


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _rng(seed: int, k: int) -> np.random.Generator:
    return stream(seed, "validate", k)


def check_designs(d: int, seed: int, **_) -> CheckResult:
    n = int(round(math.log2(d)))
    if n > 2:
        return CheckResult("stabilizer_3design", True, {"skipped": "n > 2"})
    e = stabilizer_ensemble(n)
    devs = {t: verify_design(e, t).max_dev for t in (1, 2, 3) if d**t <= 4096}
    return CheckResult("stabilizer_3design", max(devs.values()) < 1e-9, {"max_dev": max(devs.values())})


def check_clifford(d: int, seed: int, **_) -> CheckResult:
    n = int(round(math.log2(d)))
    if n > 3:
        return CheckResult("clifford_pauli_map", True, {"skipped": "n > 3"})
    rng = _rng(seed, 1)
    ok = all(clifford.maps_paulis_to_paulis(clifford.random_clifford_matrix(n, rng), n) for _ in range(10))
    return CheckResult("clifford_pauli_map", ok)


def check_overlap_ks(d: int, seed: int, ks_p: float = 0.01, **_) -> CheckResult:
    rng = _rng(seed, 2)
    out = haar_state_vectors(1, d, rng)[0]
    pvals = {}
    for s in (1, 2, 4):
        phi = collective_outcomes(np.tile(out, (20000, 1)), s, rng)
        x = np.abs(phi.conj() @ out) ** 2
        pvals[s] = ks_test(x, sps.beta(s + 1, d - 1).cdf)[1]
    return CheckResult("overlap_beta_ks", min(pvals.values()) > ks_p, {"p": pvals})


def check_conditional_mean(d: int, seed: int, se: float = 5.0, **_) -> CheckResult:
    rng = _rng(seed, 3)
    out = haar_state_vectors(1, d, rng)[0]
    zs = {}
    for s in (1, 3):
        phi = collective_outcomes(np.tile(out, (50000, 1)), s, rng)
        mean, err = mean_se(np.einsum("na,nb->nab", phi, phi.conj()))
        zs[s] = max_z(mean, oracles.conditional_outcome_mean(out, d, s), err)
    return CheckResult("conditional_outcome_mean", max(zs.values()) < se, {"max_z": zs})


def check_first_moment(d: int, seed: int, se: float = 5.0, **_) -> CheckResult:
    rng = _rng(seed, 4)
    u = X.make_unitary("haar", d, rng)
    zs = {}
    for s in (1, 2):
        psi, phi = sample_rounds(u, CollectiveMeasurementSpec(s), 50000, rng)
        v = np.einsum("na,nb->nab", phi, psi).reshape(len(psi), -1)
        mean, err = mean_se(np.einsum("ni,nj->nij", v, v.conj()))
        zs[s] = max_z(mean, oracles.first_moment_matrix(u, d, s).matrix, err)
    return CheckResult("first_moment_mc", max(zs.values()) < se, {"max_z": zs})


def check_second_moment(d: int, seed: int, se: float = 5.0, **_) -> CheckResult:
    if d != 2:
        return CheckResult("second_moment_mc", True, {"skipped": "d != 2"})
    rng = _rng(seed, 5)
    u = X.make_unitary("haar", d, rng)
    zs = {}
    for s in (1, 2, 3):
        psi, phi = sample_rounds(u, CollectiveMeasurementSpec(s), 100000, rng)
        v = np.einsum("na,nb,nc,ne->nabce", phi, phi, psi, psi).reshape(len(psi), -1)
        mean, err = mean_se(np.einsum("ni,nj->nij", v, v.conj()))
        zs[s] = max_z(mean, oracles.second_moment_matrix(u, d, s).matrix, err)
    return CheckResult("second_moment_mc", max(zs.values()) < se, {"max_z": zs})


def check_moment_routes(d: int, seed: int, **_) -> CheckResult:
    if d > 4:
        return CheckResult("moment_routes", True, {"skipped": "d > 4"})
    rng = _rng(seed, 6)
    u = X.make_unitary("haar", d, rng)
    dev = 0.0
    for s in (1, 2, 3):
        a = oracles.x_tensor_x_moment(u, d, s).matrix
        b = oracles.x_tensor_x_from_second_moment(u, d, s)
        dev = max(dev, float(np.max(np.abs(a - b))))
    return CheckResult("moment_routes", dev < 1e-9, {"max_dev": dev})


def _random_task(d: int, rng, B=None, style="gue") -> PredictionTask:
    return X.make_task(style, B or min(2.0, d), "induced", 2, d, rng)


def check_expansions(d: int, seed: int, **_) -> CheckResult:
    if d > 4:
        return CheckResult("expansion_vs_dense", True, {"skipped": "d > 4"})
    rng = _rng(seed, 7)
    u = X.make_unitary("haar", d, rng)
    task = _random_task(d, rng)
    sd = run_learning(u, CollectiveMeasurementSpec(2), 8, seed)
    amat = np.kron(task.O, task.rho.T)
    dense = [snap.dense() for snap in sd]
    lin = max(abs(linear_single(sd[i], task) - np.trace(amat @ dense[i]).real) for i in range(8))
    quad = max(
        abs(quadratic_pair(sd[i], sd[j], task) - np.trace(amat @ dense[i] @ dense[j]) / d)
        for i in range(8)
        for j in range(8)
        if i != j
    )
    n = int(round(math.log2(d)))
    w, v = X.anticommuting_paulis(n, rng)
    ot = OtocTask(clifford.pauli_string(w), clifford.pauli_string(v))
    oto = max(abs(otoc_pair_value(sd[i], sd[j], ot) - otoc_pair_dense(sd[i], sd[j], ot)) for i in range(4) for j in range(4) if i != j)
    ok = max(lin, quad, oto) < 1e-7
    return CheckResult("expansion_vs_dense", ok, {"linear": lin, "quadratic": quad, "otoc": oto})


def check_unbiased(d: int, seed: int, se: float = 5.0, **_) -> CheckResult:
    rng = _rng(seed, 8)
    zs = {}
    for s in (1, 2):
        u = X.make_unitary("haar", d, rng)
        task = _random_task(d, rng)
        z = X.batch_mean_samples(u, task, CollectiveMeasurementSpec(s), 8, 1000, seed + s)
        zs[s] = abs(z.mean() - oracles.exact_linear_expectation(u, task)) / (z.std(ddof=1) / math.sqrt(len(z)))
    return CheckResult("batch_mean_unbiased", max(zs.values()) < se, {"z": zs})


def check_exact_variance(d: int, seed: int, se: float = 5.0, **_) -> CheckResult:
    if d not in (2, 4):
        return CheckResult("exact_variance", True, {"skipped": "d not in {2, 4}"})
    rng = _rng(seed, 9)
    u = X.make_unitary("haar", d, rng)
    task = _random_task(d, rng, style="pauli")
    zs = {}
    for s, q in ((1, 4), (2, 8)):
        z = X.batch_mean_samples(u, task, CollectiveMeasurementSpec(s), q, 20000, seed + 10 * q + s)
        ex = oracles.exact_variance_Z(u, task, d, s, q)
        zs[(s, q)] = abs(np.var(z, ddof=1) - ex) / variance_se(z)
    return CheckResult("exact_variance", max(zs.values()) < se, {"z": {str(k): v for k, v in zs.items()}})


def check_prop1(d: int, seed: int, **_) -> CheckResult:
    rng = _rng(seed, 10)
    u = X.make_unitary("haar", d, rng)
    ratios = {}
    for s in (1, 2):
        for q in (4, 16):
            task = _random_task(d, rng, B=1.0, style="scaled-identity")
            z = X.batch_mean_samples(u, task, CollectiveMeasurementSpec(s), q, 1000, seed + 31 * q + s)
            ratios[f"{s},{q}"] = float(np.var(z, ddof=1) / oracles.prop1_bound(d, s, q, task.B, task.purity))
    return CheckResult("prop1_bound", max(ratios.values()) <= 1.0, {"ratio": ratios})


def check_otoc(d: int, seed: int, se: float = 5.0, **_) -> CheckResult:
    n = int(round(math.log2(d)))
    x, z = ("X" + "I" * (n - 1)), ("Z" + "I" * (n - 1))
    eye = np.eye(d, dtype=complex)
    anti = exact_otoc(eye, OtocTask(clifford.pauli_string(x), clifford.pauli_string(z)))
    comm = exact_otoc(eye, OtocTask(clifford.pauli_string(z), clifford.pauli_string(z)))
    rng = _rng(seed, 11)
    u = X.make_unitary("haar", d, rng)
    w, v = X.anticommuting_paulis(n, rng)
    task = OtocTask(clifford.pauli_string(w), clifford.pauli_string(v))
    vals = X.otoc_samples(u, task, CollectiveMeasurementSpec(1), 32, 1000, seed + 99)
    zval = abs(vals.mean() - exact_otoc(u, task)) / (vals.std(ddof=1) / math.sqrt(len(vals)))
    ok = abs(anti + 1) < 1e-12 and abs(comm - 1) < 1e-12 and zval < se
    return CheckResult("otoc", ok, {"U=I anticommuting": anti, "U=I commuting": comm, "z": zval})


def check_serialization(d: int, seed: int, **_) -> CheckResult:
    rng = _rng(seed, 12)
    u = X.make_unitary("haar", d, rng)
    spec = CollectiveMeasurementSpec(1)
    a = run_learning(u, spec, 700, seed, "haar")
    b = run_learning(u, spec, 700, seed, "haar", threads=2)
    c = ShadowData.from_bytes(a.to_bytes())
    same = a.to_bytes() == b.to_bytes() == c.to_bytes()
    task = _random_task(d, rng)
    return CheckResult("determinism_roundtrip", same and batch_mean(a, task) == batch_mean(c, task))


CHECKS: list[Callable[..., CheckResult]] = [
    check_designs,
    check_clifford,
    check_overlap_ks,
    check_conditional_mean,
    check_first_moment,
    check_second_moment,
    check_moment_routes,
    check_expansions,
    check_unbiased,
    check_exact_variance,
    check_prop1,
    check_otoc,
    check_serialization,
]


def run_suite(d: int, seed: int, se: float = 5.0, ks_p: float = 0.01, log=None) -> list[CheckResult]:
    out = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        res = fn(d=d, seed=seed, se=se, ks_p=ks_p)
        res.seconds = time.perf_counter() - t0
        out.append(res)
        if log:
            log(res.line())
    return out

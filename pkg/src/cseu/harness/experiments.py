"""Monte Carlo experiments: stacked shadows, batch-mean samples, failure rates, scans, calibration.

Large experiments never build one ShadowData per repeat. Rounds are drawn in
blocks from keyed streams and kept as (n, m, d) arrays. Batch means come from
the batch operator S = sum_i P_i, which fixes every quadratic and linear
statistic of the batch:

    sum_{i != j} Tr(A P_i P_j) = Tr(A S^2) - Tr(A S),   sum_i Tr(A P_i) = Tr(A S).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import clifford, oracles
from ..ensembles import induced_density, random_observable
from ..estimator import PredictionTask, snapshot_coefficients
from ..measurement import CollectiveMeasurementSpec, sample_rounds
from ..otoc import OtocTask, otoc_sum
from ..qcore import DensityOp, haar_state_vectors, haar_unitary
from ..rng import stream
from .stats import StatReport, summarize

ROUNDS_PER_STREAM = 1 << 14


# --------------------------------------------------------------------------
# random instances
# --------------------------------------------------------------------------


def make_unitary(kind: str, d: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "haar":
        return haar_unitary(d, rng).matrix
    if kind == "identity":
        return np.eye(d, dtype=complex)
    if kind == "clifford":
        return clifford.random_clifford_matrix(int(round(math.log2(d))), rng)
    raise ValueError(f"unknown unitary kind {kind!r}")


def make_state(source: str, d: int, lam: int, rng: np.random.Generator) -> np.ndarray:
    if source == "haar-pure":
        v = haar_state_vectors(1, d, rng)[0]
        return np.outer(v, v.conj())
    if source == "maximally-mixed":
        return np.eye(d, dtype=complex) / d
    if source == "induced":
        return induced_density(d, lam, rng).matrix
    raise ValueError(f"unknown state source {source!r}")


def make_task(style: str, B: float, source: str, lam: int, d: int, rng, label: str = "") -> PredictionTask:
    obs = random_observable(d, B, rng, style)
    return PredictionTask(obs, DensityOp(make_state(source, d, lam, rng)), B=B, label=label)


def anticommuting_paulis(n: int, rng: np.random.Generator) -> tuple[str, str]:
    labels = clifford.all_pauli_labels(n)
    while True:
        w, v = (labels[k] for k in rng.integers(len(labels), size=2))
        pw, pv = clifford.pauli_string(w), clifford.pauli_string(v)
        if np.allclose(pw @ pv, -pv @ pw):
            return w, v


# --------------------------------------------------------------------------
# stacked shadows
# --------------------------------------------------------------------------


def shadow_stack(
    u,
    spec: CollectiveMeasurementSpec,
    n: int,
    m: int,
    seed: int,
    module: str = "experiment",
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """n independent shadows of m rounds each, as (n, m, d) arrays.

    Shadows are grouped so one stream covers about ROUNDS_PER_STREAM rounds;
    group k always draws from stream (seed, module, k).
    """
    d = np.asarray(u).shape[0]
    per = max(1, ROUNDS_PER_STREAM // m)
    groups = [(k, min(per, n - k * per)) for k in range(-(-n // per))]

    def run(item):
        k, count = item
        psi, phi = sample_rounds(u, spec, count * m, stream(seed, module, k))
        return psi.reshape(count, m, d), phi.reshape(count, m, d)

    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, groups))
    else:
        parts = [run(g) for g in groups]
    return np.concatenate([p for p, _ in parts]), np.concatenate([f for _, f in parts])


def batch_operators(psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """S = sum_i (phi_i (x) conj psi_i)(...)^dag over the second-to-last axis."""
    *lead, q, d = psi.shape
    v = (phi[..., :, None] * psi.conj()[..., None, :]).reshape(*lead, q, d * d)
    return np.einsum("...ix,...iy->...xy", v, v.conj())


def _task_ops(tasks) -> tuple[np.ndarray, np.ndarray]:
    amats = np.array([np.kron(t.O, t.rho.T) for t in tasks])
    traces = np.array([np.trace(t.O) for t in tasks])
    return amats, traces


def zhat_from_operators(s_ops: np.ndarray, q: int, d: int, s: int, tasks) -> np.ndarray:
    """Batch means for every (batch, task): shape s_ops.shape[:-2] + (len(tasks),)."""
    a, b = snapshot_coefficients(d, s)
    amats, traces = _task_ops(tasks)
    lin = np.einsum("txy,...yx->...t", amats, s_ops)
    s2 = s_ops @ s_ops
    quad = np.einsum("txy,...yx->...t", amats, s2) - lin
    total = a * a * quad - 2 * a * b * (q - 1) * lin + q * (q - 1) * b * b * traces
    return np.real(total) / (q * (q - 1) * d)


def direct_from_operators(s_ops: np.ndarray, m: int, d: int, s: int, tasks) -> np.ndarray:
    a, b = snapshot_coefficients(d, s)
    amats, traces = _task_ops(tasks)
    lin = np.einsum("txy,...yx->...t", amats, s_ops)
    return np.real(a * lin - m * b * traces) / m


def batch_mean_samples(u, task, spec, q: int, n_batches: int, seed: int, threads: int = 1) -> np.ndarray:
    psi, phi = shadow_stack(u, spec, n_batches, q, seed, threads=threads)
    d = psi.shape[-1]
    return zhat_from_operators(batch_operators(psi, phi), q, d, spec.s, [task])[:, 0]


def median_of_means_stacked(s_ops: np.ndarray, q: int, d: int, s: int, tasks) -> np.ndarray:
    """s_ops shaped (n, R, D, D) -> medians shaped (n, len(tasks))."""
    return np.median(zhat_from_operators(s_ops, q, d, s, tasks), axis=1)


# --------------------------------------------------------------------------
# failure-rate experiment
# --------------------------------------------------------------------------


def per_batch_failure_bound(u, tasks, s: int, q: int, epsilon: float) -> float:
    """Chebyshev bound max_task Var[Z]/eps^2 from the exact variance (d in {2, 4})."""
    d = np.asarray(u).shape[0]
    return max(oracles.exact_variance_Z(u, t, d, s, q) for t in tasks) / epsilon**2


def failure_rate_experiment(
    u,
    tasks,
    spec: CollectiveMeasurementSpec,
    q: int,
    R: int,
    epsilon: float,
    repeats: int,
    seed: int,
    threads: int = 1,
    chunk: int = 50,
) -> StatReport:
    """Empirical Pr[some task has |E - truth| >= eps] over independent shadows of R*q rounds."""
    d = np.asarray(u).shape[0]
    truths = np.array([oracles.exact_linear_expectation(u, t) for t in tasks])
    joint = []
    single = []
    batch_fail = []
    for c0 in range(0, repeats, chunk):
        count = min(chunk, repeats - c0)
        psi, phi = shadow_stack(u, spec, count * R, q, seed + 7919 * (c0 // chunk), threads=threads)
        s_ops = batch_operators(psi, phi).reshape(count, R, d * d, d * d)
        z = zhat_from_operators(s_ops, q, d, spec.s, tasks)  # (count, R, T)
        err = np.abs(np.median(z, axis=1) - truths) >= epsilon
        joint.append(err.any(axis=1))
        single.append(err.mean(axis=1))
        batch_fail.append((np.abs(z - truths) >= epsilon).mean(axis=(1, 2)))
    joint = np.concatenate(joint).astype(float)
    rep = summarize(joint)
    chernoff = math.exp(-R * oracles.KL_HALF_THREEQUARTERS)
    rep.extra.update(
        failure_rate=float(joint.mean()),
        per_task_failure=float(np.concatenate(single).mean()),
        per_batch_failure=float(np.concatenate(batch_fail).mean()),
        chernoff_per_task=chernoff,
        union_bound=len(tasks) * chernoff,
        R=R,
        q=q,
        epsilon=epsilon,
        repeats=repeats,
    )
    return rep


# --------------------------------------------------------------------------
# OTOC samples
# --------------------------------------------------------------------------


def otoc_samples(u, task: OtocTask, spec, m: int, n: int, seed: int, threads: int = 1) -> np.ndarray:
    psi, phi = shadow_stack(u, spec, n, m, seed, threads=threads)
    d = psi.shape[-1]
    vals = np.array([otoc_sum(psi[k], phi[k], task, spec.s) for k in range(n)])
    return np.real(vals) / (m * (m - 1) * d)


# --------------------------------------------------------------------------
# scan and calibration
# --------------------------------------------------------------------------


@dataclass
class ScanPoint:
    d: int
    s: int
    q: int
    B: float
    lam: int
    purity: float
    var_empirical: float
    var_se: float
    prop1_bound: float
    ratio: float
    thm1_budget: int


def scan_point(d, s, q, B, lam, style, batches, seed, epsilon, delta, M) -> ScanPoint:
    from .stats import variance_se

    rng = stream(seed, "experiment", 0)
    u = make_unitary("haar", d, rng)
    task = make_task(style, B, "induced" if lam > 1 else "haar-pure", lam, d, rng)
    z = batch_mean_samples(u, task, CollectiveMeasurementSpec(s), q, batches, seed + 1)
    var = float(np.var(z, ddof=1))
    bound = oracles.prop1_bound(d, s, q, B, task.purity)
    return ScanPoint(
        d=d,
        s=s,
        q=q,
        B=float(B),
        lam=lam,
        purity=task.purity,
        var_empirical=var,
        var_se=variance_se(z),
        prop1_bound=bound,
        ratio=var / bound,
        thm1_budget=oracles.thm1_query_budget(d, s, max(1.0, B), M, epsilon, delta),
    )


def scan_grid(grid: list[tuple], style: str, batches: int, seed: int, epsilon=0.1, delta=0.05, M=1, threads=1):
    """Each grid point gets its own seed derived from its index, so results do not depend on threads."""

    def run(ix):
        i, (d, s, q, B, lam) = ix
        return scan_point(d, s, q, B, lam, style, batches, seed * 1_000_003 + 17 * i, epsilon, delta, M)

    items = list(enumerate(grid))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, items))
    return [run(x) for x in items]


def smallest_constant(C: float, target: float) -> float:
    """Smallest K with C (2/K + 2/K^2) <= target."""
    # C*2*K + C*2 <= target*K^2
    a, b, c = target, -2 * C, -2 * C
    return (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)


def calibrate(seed: int = 0, batches: int = 1000, n_unitaries: int = 3, threads: int = 1) -> dict:
    """Fit the bound constants at d = 2, s = 1 (max empirical/bound ratio, doubled)."""
    d, s = 2, 1
    spec = CollectiveMeasurementSpec(s)
    rows = []
    idx = 0
    for k in range(n_unitaries):
        rng = stream(seed, "calibration", k)
        u = make_unitary("haar", d, rng)
        for style in ("scaled-identity", "pauli", "gue"):
            for B in (1.0, 2.0):
                for lam in (1, 2):
                    task = make_task(style, B, "induced", lam, d, rng)
                    for q in (2, 4, 8, 16, 32):
                        idx += 1
                        z = batch_mean_samples(u, task, spec, q, batches, seed * 7_777 + idx, threads)
                        var = float(np.var(z, ddof=1))
                        bound = oracles.prop1_bound(d, s, q, B, task.purity, C=1.0)
                        rows.append(("variance", style, B, lam, q, var, bound, var / bound))
    c_var = 2 * max(r[-1] for r in rows)
    otoc_rows = []
    for k in range(n_unitaries):
        rng = stream(seed, "calibration", 100 + k)
        u = make_unitary("haar", d, rng)
        w, v = anticommuting_paulis(1, rng)
        task = OtocTask(clifford.pauli_string(w), clifford.pauli_string(v))
        for m in (4, 8, 16, 32, 64):
            idx += 1
            z = otoc_samples(u, task, spec, m, batches, seed * 7_777 + idx, threads)
            var = float(np.var(z, ddof=1))
            bound = oracles.otoc_variance_bound(d, s, m, C=1.0)
            otoc_rows.append(("otoc", w + "/" + v, m, var, bound, var / bound))
    c_otoc = 2 * max(r[-1] for r in otoc_rows)
    return {
        "constants": {
            "C_variance": c_var,
            "C_otoc": c_otoc,
            "C_query": smallest_constant(c_var, 0.25),
            "C_otoc_budget": smallest_constant(c_otoc, 0.1),
        },
        "variance_rows": rows,
        "otoc_rows": otoc_rows,
        "seed": seed,
        "batches": batches,
    }

"""Closed-form targets: snapshot moments, exact variances, and the variance / query bounds.

System orderings used throughout:

* first moment E[phi (x) psi]: (out, in)
* second moment E[phi^{(x)2} (x) psi^{(x)2}]: (out, out, in, in)
* E[X (x) X]: (out1, in1, out2, in2)

Bounds carry an overall constant ``C``. When it is omitted the calibrated value
from :mod:`cseu.constants` is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants
from .qcore import (
    DimensionError,
    as_matrix,
    choi_of_unitary,
    embed,
    partial_transpose,
    permutation_operator,
    permute_systems,
    sym_dim,
    sym_projector,
)

MAX_OP_SIZE = 4096
KL_HALF_THREEQUARTERS = 0.5 * math.log(4.0 / 3.0)


@dataclass(frozen=True)
class MomentOperator:
    order: str  # "first" | "second" | "x-tensor-x"
    matrix: np.ndarray
    d: int
    s: int

    def __post_init__(self):
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > 1e-9:
            raise ValueError(f"{self.order} moment operator is not Hermitian")


def _unpack_task(task):
    """Accept a PredictionTask or an (O, rho) pair."""
    if isinstance(task, tuple):
        o, rho = task
        return as_matrix(o), as_matrix(rho)
    return as_matrix(task.observable), as_matrix(task.state)


# --------------------------------------------------------------------------
# expectations and moments
# --------------------------------------------------------------------------


def exact_linear_expectation(u, task) -> float:
    o, rho = _unpack_task(task)
    um = as_matrix(u)
    return float(np.real(np.trace(o @ um @ rho @ um.conj().T)))


def choi_duality_value(u, task) -> float:
    """Tr[(O (x) rho^T) Upsilon], the same number reached through the Choi operator."""
    o, rho = _unpack_task(task)
    return float(np.real(np.trace(np.kron(o, rho.T) @ choi_of_unitary(u).matrix)))


def conditional_outcome_mean(output, d: int, s: int) -> np.ndarray:
    v = as_matrix(output).reshape(-1)
    if v.shape[0] != d:
        raise DimensionError("output dimension does not match d")
    return (np.eye(d) + s * np.outer(v, v.conj())) / (d + s)


def first_moment_matrix(u, d: int, s: int) -> MomentOperator:
    if d > 8:
        raise DimensionError("first moment supported for d <= 8")
    um = as_matrix(u)
    swap = permutation_operator((1, 0), d=d)
    m = ((d + 1 + s) * np.eye(d * d) + s * np.kron(um, um.conj().T) @ swap) / (d * (d + 1) * (d + s))
    return MomentOperator("first", m, d, s)


def _conj_on(op: np.ndarray, u: np.ndarray, systems, n: int, d: int) -> np.ndarray:
    uu = embed(u, systems[:1], n, d)
    for k in systems[1:]:
        uu = uu @ embed(u, [k], n, d)
    return uu @ op @ uu.conj().T


def _check_size(d: int) -> None:
    if d**4 > MAX_OP_SIZE:
        raise DimensionError(f"d^4 = {d**4} exceeds {MAX_OP_SIZE}")


def second_moment_deltas(u, d: int) -> tuple[np.ndarray, ...]:
    """Delta_1..Delta_4 on (out, out, in, in)."""
    _check_size(d)
    um = as_matrix(u)
    p2 = sym_projector(2, d)
    p3 = sym_projector(3, d)
    p4 = sym_projector(4, d)
    eye2 = np.eye(d * d)
    p2_out = np.kron(p2, eye2)
    delta1 = np.kron(p2, p2)
    delta2 = _conj_on(embed(p3, [1, 2, 3], 4, d), um, [1], 4, d) @ p2_out
    delta3 = _conj_on(embed(p3, [0, 2, 3], 4, d), um, [0], 4, d) @ p2_out
    delta4 = _conj_on(p4, um, [0, 1], 4, d)
    return delta1, delta2, delta3, delta4


def second_moment_matrix(u, d: int, s: int) -> MomentOperator:
    k2, k3, k4 = sym_dim(2, d), sym_dim(3, d), sym_dim(4, d)
    d1, d2, d3, d4 = second_moment_deltas(u, d)
    inner = d1 / k2 + s * (d2 + d3) / k3 + s * (s - 1) * d4 / (2 * k4)
    m = 2.0 / ((d + s) * (d + s + 1)) * inner
    return MomentOperator("second", m, d, s)


def x_tensor_x_deltas(u, d: int) -> tuple[np.ndarray, ...]:
    """Delta~_1..Delta~_7 on (out1, in1, out2, in2)."""
    _check_size(d)
    um = as_matrix(u)
    dims = (d,) * 4
    p2 = sym_projector(2, d)
    p3 = sym_projector(3, d)
    p4 = sym_projector(4, d)
    p2_13 = embed(p2, [0, 2], 4, d)
    t1 = p2_13 @ embed(p2, [1, 3], 4, d)
    t2 = _conj_on(embed(p3, [1, 2, 3], 4, d), um, [2], 4, d) @ p2_13
    t3 = _conj_on(embed(p3, [0, 1, 3], 4, d), um, [0], 4, d) @ p2_13
    t4 = _conj_on(p4, um, [0, 2], 4, d)
    t2, t3, t4 = (partial_transpose(t, [1, 3], dims) for t in (t2, t3, t4))
    ups = choi_of_unitary(um).matrix
    eye2 = np.eye(d * d)
    return t1, t2, t3, t4, np.kron(ups, eye2), np.kron(eye2, ups), np.eye(d**4)


def x_tensor_x_moment(u, d: int, s: int) -> MomentOperator:
    k2, k3, k4 = sym_dim(2, d), sym_dim(3, d), sym_dim(4, d)
    t1, t2, t3, t4, t5, t6, t7 = x_tensor_x_deltas(u, d)
    lead = 2 * d**2 * (d + 1) ** 2 * (d + s) / (s**2 * (d + s + 1))
    b = (d + 1 + s) / s
    m = lead * (t1 / k2 + s * (t2 + t3) / k3 + s * (s - 1) * t4 / (2 * k4)) - b * (t5 + t6) - b**2 * t7
    return MomentOperator("x-tensor-x", m, d, s)


def x_tensor_x_from_second_moment(u, d: int, s: int) -> np.ndarray:
    """Independent route: reorder the second moment and expand X = aP - bI by hand."""
    a = d * (d + 1) * (d + s) / s
    b = (d + 1 + s) / s
    dims = (d,) * 4
    m2 = second_moment_matrix(u, d, s).matrix
    # (out, out, in, in) -> (out, in, out, in): factor 1 -> slot 2, factor 2 -> slot 1
    pp = partial_transpose(permute_systems(m2, (0, 2, 1, 3), dims), [1, 3], dims)
    ep = partial_transpose(first_moment_matrix(u, d, s).matrix, 1, (d, d))
    eye2 = np.eye(d * d)
    return a * a * pp - a * b * (np.kron(ep, eye2) + np.kron(eye2, ep)) + b * b * np.eye(d**4)


# --------------------------------------------------------------------------
# exact variance of the batch mean
# --------------------------------------------------------------------------


def _pair_moments(u, task, s: int, m4: np.ndarray | None = None) -> dict:
    """E[Lambda_ij Lambda_kl] for the six index patterns with a shared index."""
    o, rho = _unpack_task(task)
    um = as_matrix(u)
    d = um.shape[0]
    dd = d * d
    if m4 is None:
        m4 = x_tensor_x_moment(um, d, s).matrix
    m4 = m4.reshape(dd, dd, dd, dd)  # [r1, r2, c1, c2] = E[X_{r1 c1} X_{r2 c2}]
    a = np.kron(o, rho.T)
    y = choi_of_unitary(um).matrix
    ein = np.einsum
    return {
        "same_first": ein("ab,ef,bfcg,ca,ge->", a, a, m4, y, y, optimize=True),  # k = i
        "same_second": ein("ab,ef,bc,fg,cgae->", a, a, y, y, m4, optimize=True),  # l = j
        "cross_ji": ein("ab,ef,bc,cfag,ge->", a, a, y, m4, y, optimize=True),  # k = j
        "cross_il": ein("ab,ef,bgce,ca,fg->", a, a, m4, y, y, optimize=True),  # l = i
        "both_same": ein("ab,ef,bfcg,cgae->", a, a, m4, m4, optimize=True),  # (k,l) = (i,j)
        "both_swap": ein("ab,ef,bgce,cfag->", a, a, m4, m4, optimize=True),  # (k,l) = (j,i)
    }


def covariance_cases(u, task, s: int) -> dict:
    """Cov(Lambda_ij, Lambda_kl) grouped into the four index-coincidence cases.

    Same-position and different-position single matches are each averaged over
    their two orientations. Lambda_ij is complex; the returned values are the
    real parts of the (non-conjugated) product covariances that enter Var[Z].
    """
    mom = _pair_moments(u, task, s)
    d = as_matrix(u).shape[0]
    mean_sq = (d * exact_linear_expectation(u, task)) ** 2
    return {
        "one_same": float(np.real(mom["same_first"] + mom["same_second"]) / 2 - mean_sq),
        "one_diff": float(np.real(mom["cross_ji"] + mom["cross_il"]) / 2 - mean_sq),
        "both_swap": float(np.real(mom["both_swap"]) - mean_sq),
        "both_same": float(np.real(mom["both_same"]) - mean_sq),
    }


def exact_variance_Z(u, task, d: int, s: int, q: int) -> float:
    """Var of the batch mean over q snapshots; exact via E[X (x) X].

    Supported at d = 2 and (slower) d = 4.
    """
    return float(exact_variance_curve(u, task, d, s, [q])[0])


def exact_variance_curve(u, task, d: int, s: int, qs, m4: np.ndarray | None = None) -> np.ndarray:
    """exact_variance_Z for several batch sizes; pass m4 = x_tensor_x_moment(u, d, s).matrix to reuse it."""
    if d not in (2, 4):
        raise DimensionError("exact variance is available for d in {2, 4}")
    if as_matrix(u).shape[0] != d:
        raise DimensionError("unitary dimension does not match d")
    q = np.asarray(qs, dtype=float)
    if np.any(q < 2):
        raise ValueError("q must be at least 2")
    mom = _pair_moments(u, task, s, m4)
    mean_sq = (d * exact_linear_expectation(u, task)) ** 2
    one = mom["same_first"] + mom["same_second"] + mom["cross_ji"] + mom["cross_il"] - 4 * mean_sq
    both = mom["both_same"] + mom["both_swap"] - 2 * mean_sq
    c = 1.0 / (q * (q - 1) * d)
    var = c * c * (q * (q - 1) * (q - 2) * one + q * (q - 1) * both)
    return np.real(var)


def exact_variance_linear(u, task, d: int, s: int) -> float:
    """Var of a single Tr[(O (x) rho^T) X] from the first and second moments."""
    o, rho = _unpack_task(task)
    a = np.kron(o, rho.T)
    m4 = x_tensor_x_moment(u, d, s).matrix
    second = np.real(np.trace(np.kron(a, a) @ m4))
    return float(second - exact_linear_expectation(u, task) ** 2)


def linear_variance_worst_case(d: int, s: int, B: float) -> float:
    """Exact single-snapshot variance for O = sqrt(B/d) I and pure rho."""
    a = d * (d + 1) * (d + s) / s
    return (B / d) * a * a * (2.0 / (d * (d + 1)) - 1.0 / d**2)


# --------------------------------------------------------------------------
# bounds and budgets
# --------------------------------------------------------------------------


def _c(C: float | None, key: str = "C_variance") -> float:
    return constants.get(key) if C is None else float(C)


def prop1_bound(d: int, s: int, q: int, B: float, purity: float, C: float | None = None) -> float:
    if min(d, s, q, B, purity) <= 0:
        raise ValueError("all arguments must be positive")
    p = purity
    return _c(C) * ((d * p / s + min(1.0, B * p)) / q + (d**4 / s**4 + 1) * B * p / q**2)


def covariance_case_bounds(d: int, s: int, B: float, purity: float, C: float | None = None) -> dict:
    """Upper bounds on Cov(Lambda_ij, Lambda_kl) per coincidence pattern."""
    p = purity
    c = _c(C)
    sq = math.sqrt(d * p)
    return {
        "one_diff": c * d**2 * min(1.0, B * p),
        "one_same": c * (d**3 * p / s + d**2 * min(1.0, B * p)),
        "both_swap": c * (d**3 / s**4 + d**2 / s**3 + d * sq / s**2 + sq / s + p) * d**2 * B,
        "both_same": c * (d**4 / s**4 + d**3 / s**3 + d**2 / s**2 + d / s + 1) * d**2 * B * p,
    }


def kl_bernoulli(p: float, q: float) -> float:
    def term(x, y):
        return 0.0 if x == 0 else x * math.log(x / y)

    return term(p, q) + term(1 - p, 1 - q)


def median_batches(M: int, delta: float) -> int:
    """R = ceil(ln(M/delta) / D(1/2 || 3/4))."""
    if M < 1 or not 0 < delta < 1:
        raise ValueError("need M >= 1 and 0 < delta < 1")
    return max(1, math.ceil(math.log(M / delta) / KL_HALF_THREEQUARTERS))


def accuracy_batch_size(d: int, s: int, B: float, epsilon: float, C: float | None = None) -> int:
    """Batch size q = C_query * (max{d/s,1}/eps^2 + sqrt(B) max{d^2/s^2,1}/eps).

    C_query is derived from C_variance so that C_variance * prop1_bound shape at q <= eps^2/4,
    i.e. each batch fails with probability at most 1/4 by Chebyshev.
    """
    return max(2, math.ceil(_c(C, "C_query") * (max(d / s, 1.0) / epsilon**2 + math.sqrt(B) * max(d**2 / s**2, 1.0) / epsilon)))


def thm1_query_budget(d: int, s: int, B: float, M: int, epsilon: float, delta: float, C: float | None = None) -> int:
    """Total queries s*q*R; equals C*[max{d,s}/eps^2 + max{d^2,s^2}sqrt(B)/(s eps)] * R up to rounding."""
    if s < 1 or B < 1 or not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("need s >= 1, B >= 1, 0 < epsilon, delta < 1")
    return s * accuracy_batch_size(d, s, B, epsilon, C) * median_batches(M, delta)


def avgcase_variance_bound(d: int, s: int, lam: int, B: float, m: int, C: float | None = None) -> float:
    if s > d or lam > d:
        raise ValueError("average-case bound requires s <= d and lambda <= d")
    if min(s, lam, m) < 1:
        raise ValueError("s, lambda, m must be positive")
    return _c(C) * ((d / (s * lam) + min(1.0, B / lam)) / m + d**4 * B / (m**2 * s**4 * lam))


def avgcase_snapshot_count(d: int, s: int, lam: int, B: float, epsilon: float, delta: float, C: float | None = None) -> int:
    """Smallest m with avgcase_variance_bound <= delta*eps^2/4."""
    target = delta * epsilon**2 / 4
    lo, hi = 2, 2
    while avgcase_variance_bound(d, s, lam, B, hi, C) > target:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if avgcase_variance_bound(d, s, lam, B, mid, C) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def otoc_variance_bound(d: int, s: int, m: int, C: float | None = None) -> float:
    return _c(C, "C_otoc") * ((d**2 / s**2 + 1) / m + d**2 * (d**4 / s**4 + 1) / m**2)


def otoc_query_budget(d: int, s: int, epsilon: float, C: float | None = None) -> int:
    """m*s = C*(max{d^2/s, s}/eps^2 + max{d^3/s, d s}/eps)."""
    if not 0 < epsilon < 1:
        raise ValueError("need 0 < epsilon < 1")
    c = _c(C, "C_otoc_budget")
    return math.ceil(c * (max(d**2 / s, s) / epsilon**2 + max(d**3 / s, d * s) / epsilon))

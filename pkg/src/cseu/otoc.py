"""Out-of-time-ordered correlators Tr(rho W_U V^dag W_U V), W_U = U^dag W U, from shadow data.

Per ordered pair of snapshots,

    D(i,j) = Tr[(X_i (x) X_j)(W (x) (V^dag)^T (x) W (x) (d V rho)^T) T_(1,3)]

and the estimate is sum_{i != j} D(i,j) / (m(m-1)d). With X = aP - bI and
Tr[(B1 (x) B2 (x) B3 (x) B4) T_(1,3)] = Tr(B1 B3) Tr(B2) Tr(B4), every term reduces
to inner products of the stored state vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracles
from .ensembles import Observable
from .estimator import EstimateReport, _check_residual, snapshot_coefficients
from .measurement import ShadowData, Snapshot
from .qcore import DensityOp, DimensionError, as_matrix, permutation_operator


@dataclass(frozen=True)
class OtocTask:
    W: Observable
    V: Observable
    state: DensityOp | None = None
    label: str = ""

    def __post_init__(self):
        for name in ("W", "V"):
            x = getattr(self, name)
            if not isinstance(x, Observable):
                object.__setattr__(self, name, Observable(as_matrix(x)))
        d = self.W.dim
        if self.V.dim != d:
            raise DimensionError("W and V dimensions differ")
        st = self.state
        if st is None:
            st = DensityOp.maximally_mixed(d)
        elif not isinstance(st, DensityOp):
            st = DensityOp(as_matrix(st))
        if st.dim != d:
            raise DimensionError("state dimension differs from W, V")
        object.__setattr__(self, "state", st)

    @property
    def d(self) -> int:
        return self.W.dim

    @property
    def infinite_temperature(self) -> bool:
        """rho = I/d with W, V unitary and traceless."""
        d, tol = self.d, 1e-9
        eye = np.eye(d)
        ok = np.max(np.abs(self.state.matrix - eye / d)) < tol
        for x in (self.W.matrix, self.V.matrix):
            ok = ok and np.max(np.abs(x @ x - eye)) < tol and abs(np.trace(x)) < tol
        return bool(ok)


def exact_otoc(u, task: OtocTask) -> float:
    um = as_matrix(u)
    if um.shape[0] != task.d:
        raise DimensionError("unitary dimension does not match task")
    w_u = um.conj().T @ task.W.matrix @ um
    v = task.V.matrix
    val = np.trace(task.state.matrix @ w_u @ v.conj().T @ w_u @ v)
    return float(np.real(val))


def _factors(task: OtocTask):
    d = task.d
    w = task.W.matrix
    v = task.V.matrix
    return w, v.conj().T, d * v @ task.state.matrix  # W, V^dag, d V rho


def otoc_pair_value(si: Snapshot, sj: Snapshot, task: OtocTask) -> complex:
    """D(i, j) by the scalar expansion."""
    d = si.d
    a, b = snapshot_coefficients(d, si.s)
    w, vd, vr = _factors(task)
    w2 = w @ w
    c_i = np.vdot(si.psi, vd @ si.psi)
    e_j = np.vdot(sj.psi, vr @ sj.psi)
    k = np.vdot(si.phi, w @ sj.phi) * np.vdot(sj.phi, w @ si.phi)
    val = (
        a * a * k * c_i * e_j
        - a * b * np.vdot(si.phi, w2 @ si.phi) * c_i * np.trace(vr)
        - a * b * np.vdot(sj.phi, w2 @ sj.phi) * np.trace(vd) * e_j
        + b * b * np.trace(w2) * np.trace(vd) * np.trace(vr)
    )
    return complex(val)


def otoc_pair_dense(si: Snapshot, sj: Snapshot, task: OtocTask) -> complex:
    """D(i, j) by materializing both snapshots; for cross-checks at d <= 4."""
    d = si.d
    if d > 4:
        raise DimensionError("dense OTOC contraction limited to d <= 4")
    w, vd, vr = _factors(task)
    xx = np.kron(si.dense(), sj.dense())
    ops = np.kron(np.kron(w, vd.T), np.kron(w, vr.T))
    t13 = permutation_operator((2, 1, 0, 3), d=d)
    return complex(np.trace(xx @ ops @ t13))


def otoc_sum(psi: np.ndarray, phi: np.ndarray, task: OtocTask, s: int) -> complex:
    """sum_{i != j} D(i, j) in O(m d^2)."""
    m, d = psi.shape
    a, b = snapshot_coefficients(d, s)
    w, vd, vr = _factors(task)
    w2 = w @ w
    c = np.einsum("na,na->n", psi.conj(), psi @ vd.T)
    e = np.einsum("na,na->n", psi.conj(), psi @ vr.T)
    wphi = phi @ w.T
    diag_w = np.einsum("na,na->n", phi.conj(), wphi)
    w2_diag = np.einsum("na,na->n", phi.conj(), phi @ w2.T)
    s_c = (phi.T * c) @ phi.conj()
    s_e = (phi.T * e) @ phi.conj()
    # sum_{i,j} c_i e_j <phi_i|W|phi_j><phi_j|W|phi_i> = Tr(S_c W S_e W)
    full = np.trace(s_c @ w @ s_e @ w)
    quad = full - np.sum(c * e * diag_w * diag_w)
    tr_vd, tr_vr = np.trace(vd), np.trace(vr)
    lin = (m - 1) * (tr_vr * np.sum(w2_diag * c) + tr_vd * np.sum(w2_diag * e))
    const = m * (m - 1) * np.trace(w2) * tr_vd * tr_vr
    return a * a * quad - a * b * lin + b * b * const


def otoc_estimate(shadow: ShadowData, task: OtocTask) -> EstimateReport:
    m, d = shadow.m, shadow.d
    if m < 2:
        raise ValueError("OTOC estimate needs m >= 2")
    if task.d != d:
        raise DimensionError("task dimension does not match shadow data")
    val = otoc_sum(shadow.psi, shadow.phi, task, shadow.s) / (m * (m - 1) * d)
    est, imag = float(np.real(val)), float(abs(np.imag(val)))
    _check_residual(est, imag)
    bound = oracles.otoc_variance_bound(d, shadow.s, m) if task.infinite_temperature else float("nan")
    return EstimateReport(
        estimate=est,
        batch_values=[est],
        empirical_variance=float("nan"),
        analytic_bound=bound,
        imag_residual=imag,
        estimator="otoc",
        task=task.label,
        d=d,
        s=shadow.s,
        m=m,
        q=m,
        R=1,
        queries=shadow.queries,
    )


def otoc_estimates_stacked(psi: np.ndarray, phi: np.ndarray, task: OtocTask, s: int) -> np.ndarray:
    """Estimates for n independent shadows stacked as (n, m, d)."""
    n, m, d = psi.shape
    return np.array([np.real(otoc_sum(psi[k], phi[k], task, s)) for k in range(n)]) / (m * (m - 1) * d)


def otoc_query_budget(d: int, s: int, epsilon: float, C: float | None = None) -> int:
    return oracles.otoc_query_budget(d, s, epsilon, C)

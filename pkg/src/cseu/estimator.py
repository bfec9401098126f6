"""Prediction phase: single-snapshot and pairwise estimators, batch means, median of means.

Nothing here materializes the d^2 x d^2 snapshot. With P_i = phi_i phi_i^dag (x) (psi_i psi_i^dag)^T
and A = O (x) rho^T,

    Tr(A P_i)      = <phi_i|O|phi_i> <psi_i|rho|psi_i>
    Tr(A P_i P_j)  = <phi_j|O|phi_i> <phi_i|phi_j> <psi_i|rho|psi_j> <psi_j|psi_i>

so a batch of q snapshots needs only q x q Gram matrices ("gram" route). For
q much larger than d^2 the sum over pairs is instead taken as Tr(A S^2) - sum_i Tr(A P_i)
with S = sum_i P_i ("operator" route).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import oracles
from .ensembles import Observable
from .measurement import ShadowData, Snapshot
from .qcore import DensityOp, DimensionError, as_matrix

IMAG_TOL = 1e-6
SCHEMA_VERSION = "1"
GRAM_MAX_Q = 2048
CSV_COLUMNS = (
    "schema_version",
    "task",
    "estimator",
    "estimate",
    "truth",
    "empirical_variance",
    "analytic_bound",
    "bound_pass",
    "imag_residual",
    "d",
    "s",
    "m",
    "q",
    "R",
    "queries",
)


def snapshot_coefficients(d: int, s: int) -> tuple[float, float]:
    """(a, b) with X = a (phi (x) psi^T) - b I."""
    if d < 2 or s < 1:
        raise ValueError("need d >= 2 and s >= 1")
    return d * (d + 1) * (d + s) / s, (d + 1 + s) / s


@dataclass(frozen=True)
class PredictionTask:
    observable: Observable
    state: DensityOp
    B: float | None = None
    label: str = ""
    purity: float = field(init=False)

    def __post_init__(self):
        obs = self.observable
        if not isinstance(obs, Observable):
            obs = Observable(as_matrix(obs))
            object.__setattr__(self, "observable", obs)
        st = self.state
        if not isinstance(st, DensityOp):
            st = DensityOp(as_matrix(st))
            object.__setattr__(self, "state", st)
        d = obs.dim
        if st.dim != d:
            raise DimensionError("observable and state dimensions differ")
        if self.B is None:
            object.__setattr__(self, "B", max(1.0, obs.frobenius_sq))
        if not obs.in_obs(self.B):
            raise ValueError(f"observable is not in Obs(B={self.B})")
        p = st.purity
        if p < 1 / d - 1e-9 or p > 1 + 1e-9:
            raise ValueError("purity out of range")
        object.__setattr__(self, "purity", float(p))

    @property
    def d(self) -> int:
        return self.observable.dim

    @property
    def O(self) -> np.ndarray:
        return self.observable.matrix

    @property
    def rho(self) -> np.ndarray:
        return self.state.matrix


@dataclass(frozen=True)
class EstimatorParams:
    R: int = 1
    drop_remainder: bool = True
    method: str = "auto"  # "auto" | "gram" | "operator"

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if self.R % 2 == 0:
            object.__setattr__(self, "R", self.R + 1)
        if self.method not in ("auto", "gram", "operator"):
            raise ValueError(f"unknown method {self.method!r}")

    def batch_size(self, m: int) -> int:
        q = m // self.R
        if q < 2:
            raise ValueError(f"need at least 2 snapshots per batch: m={m}, R={self.R}")
        if not self.drop_remainder and m % self.R:
            raise ValueError("m is not a multiple of R and drop_remainder is off")
        return q


@dataclass
class EstimateReport:
    estimate: float
    batch_values: list[float]
    empirical_variance: float
    analytic_bound: float
    imag_residual: float
    estimator: str = "median-of-means"
    task: str = ""
    d: int = 0
    s: int = 0
    m: int = 0
    q: int = 0
    R: int = 1
    queries: int = 0
    truth: float | None = None

    @property
    def bound_pass(self) -> bool | None:
        if math.isnan(self.empirical_variance) or math.isnan(self.analytic_bound):
            return None
        return bool(self.empirical_variance <= self.analytic_bound)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bound_pass"] = self.bound_pass
        out["schema_version"] = SCHEMA_VERSION
        for k in ("empirical_variance", "analytic_bound"):
            if isinstance(out[k], float) and math.isnan(out[k]):
                out[k] = None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> list[str]:
        rec = self.to_dict()
        row = []
        for col in CSV_COLUMNS:
            v = rec.get(col)
            row.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        return row


def reports_to_csv(reports: list[EstimateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


# --------------------------------------------------------------------------
# per-snapshot and per-pair values
# --------------------------------------------------------------------------


def _check(snap: Snapshot, task: PredictionTask) -> None:
    if snap.d != task.d:
        raise DimensionError(f"snapshot dimension {snap.d} vs task dimension {task.d}")


def linear_single(snap: Snapshot, task: PredictionTask) -> float:
    _check(snap, task)
    a, b = snapshot_coefficients(snap.d, snap.s)
    o_val = np.vdot(snap.phi, task.O @ snap.phi)
    r_val = np.vdot(snap.psi, task.rho @ snap.psi)
    return float(np.real(a * o_val * r_val - b * np.trace(task.O)))


def quadratic_pair(si: Snapshot, sj: Snapshot, task: PredictionTask) -> complex:
    """d^-1 Tr[(O (x) rho^T) X_i X_j].

    The ordered value is complex in general; the (i,j) and (j,i) values are conjugate,
    so their average is real.
    """
    if si is sj:
        raise ValueError("quadratic_pair needs two distinct snapshots")
    _check(si, task)
    _check(sj, task)
    if si.s != sj.s:
        raise ValueError("snapshots come from runs with different s")
    d = si.d
    a, b = snapshot_coefficients(d, si.s)
    o, rho = task.O, task.rho
    cross = (
        np.vdot(sj.phi, o @ si.phi)
        * np.vdot(si.phi, sj.phi)
        * np.vdot(si.psi, rho @ sj.psi)
        * np.vdot(sj.psi, si.psi)
    )
    li = np.vdot(si.phi, o @ si.phi) * np.vdot(si.psi, rho @ si.psi)
    lj = np.vdot(sj.phi, o @ sj.phi) * np.vdot(sj.psi, rho @ sj.psi)
    val = a * a * cross - a * b * (li + lj) + b * b * np.trace(o)
    return complex(val / d)


# --------------------------------------------------------------------------
# batch means
# --------------------------------------------------------------------------


@dataclass
class BatchGeometry:
    """Task-independent quantities of one batch, shared across tasks."""

    psi: np.ndarray
    phi: np.ndarray
    method: str
    g_phi: np.ndarray | None = None  # <phi_i|phi_j>
    g_psi: np.ndarray | None = None  # <psi_i|psi_j>
    vecs: np.ndarray | None = None  # phi_i (x) conj(psi_i), rows
    s_op: np.ndarray | None = None  # sum_i P_i

    @classmethod
    def build(cls, psi: np.ndarray, phi: np.ndarray, method: str = "auto") -> "BatchGeometry":
        q, d = psi.shape
        if method == "auto":
            method = "gram" if (q <= d**3 and q <= GRAM_MAX_Q) else "operator"
        geo = cls(psi, phi, method)
        if method == "gram":
            geo.g_phi = phi.conj() @ phi.T
            geo.g_psi = psi.conj() @ psi.T
        else:
            v = np.einsum("na,nb->nab", phi, psi.conj()).reshape(q, d * d)
            geo.vecs = v
            geo.s_op = v.T @ v.conj()
        return geo

    @property
    def q(self) -> int:
        return self.psi.shape[0]


def _batch_total(geo: BatchGeometry, o: np.ndarray, rho: np.ndarray, s: int) -> complex:
    """sum_{i != j} Tr[(O (x) rho^T) X_i X_j] (un-normalized)."""
    psi, phi = geo.psi, geo.phi
    q, d = psi.shape
    a, b = snapshot_coefficients(d, s)
    o_phi = phi @ o.T
    r_psi = psi @ rho.T
    lin = np.einsum("na,na->n", phi.conj(), o_phi) * np.einsum("na,na->n", psi.conj(), r_psi)
    lin_sum = lin.sum()
    if geo.method == "gram":
        f_o = phi.conj() @ o_phi.T  # [j, i] = <phi_j|O|phi_i>
        f_r = psi.conj() @ r_psi.T  # [i, j] = <psi_i|rho|psi_j>
        t = f_o.T * geo.g_phi * f_r * geo.g_psi.T
        pair_sum = t.sum() - np.trace(t)
    else:
        amat = np.kron(o, rho.T)
        pair_sum = np.sum((amat @ geo.s_op) * geo.s_op.T) - lin_sum
    return a * a * pair_sum - 2 * a * b * (q - 1) * lin_sum + q * (q - 1) * b * b * np.trace(o)


def _finish(total: complex, q: int, d: int) -> tuple[float, float]:
    val = total / (q * (q - 1) * d)
    return float(np.real(val)), float(abs(np.imag(val)))


def _rows(batch) -> tuple[np.ndarray, np.ndarray, int]:
    if isinstance(batch, ShadowData):
        return batch.psi, batch.phi, batch.s
    snaps = list(batch)
    if not snaps:
        raise ValueError("empty batch")
    s = snaps[0].s
    if any(x.s != s or x.d != snaps[0].d for x in snaps):
        raise ValueError("batch mixes snapshots with different (d, s)")
    return np.array([x.psi for x in snaps]), np.array([x.phi for x in snaps]), s


def batch_mean(batch, task: PredictionTask, method: str = "auto") -> float:
    """Z = [q(q-1)d]^-1 sum_{i != j} Tr[(O (x) rho^T) X_i X_j]."""
    val, _ = batch_mean_with_residual(batch, task, method)
    return val


def batch_mean_with_residual(batch, task: PredictionTask, method: str = "auto") -> tuple[float, float]:
    psi, phi, s = _rows(batch)
    q, d = psi.shape
    if q < 2:
        raise ValueError("batch_mean needs q >= 2")
    if d != task.d:
        raise DimensionError("batch dimension does not match task")
    geo = BatchGeometry.build(psi, phi, method)
    return _finish(_batch_total(geo, task.O, task.rho, s), q, d)


def batch_means_stacked(psi: np.ndarray, phi: np.ndarray, o, rho, s: int, method: str = "auto") -> np.ndarray:
    """Vectorized batch means for arrays shaped (n_batches, q, d)."""
    o, rho = as_matrix(o), as_matrix(rho)
    n, q, d = psi.shape
    a, b = snapshot_coefficients(d, s)
    if method == "auto":
        method = "gram" if q <= d**3 else "operator"
    o_phi = phi @ o.T
    r_psi = psi @ rho.T
    lin_i = np.einsum("nia,nia->ni", phi.conj(), o_phi) * np.einsum("nia,nia->ni", psi.conj(), r_psi)
    lin = lin_i.sum(axis=1)
    if method == "gram":
        f_o = np.einsum("nja,nia->nij", phi.conj(), o_phi)  # [i, j] = <phi_j|O|phi_i>
        f_r = np.einsum("nia,nja->nij", psi.conj(), r_psi)
        g_phi = np.einsum("nia,nja->nij", phi.conj(), phi)
        g_psi = np.einsum("nja,nia->nij", psi.conj(), psi)  # [i, j] = <psi_j|psi_i>
        pair = (f_o * g_phi * f_r * g_psi).sum(axis=(1, 2)) - lin
    else:
        v = np.einsum("nia,nib->niab", phi, psi.conj()).reshape(n, q, d * d)
        s_op = np.einsum("nix,niy->nxy", v, v.conj())
        amat = np.kron(o, rho.T)
        pair = np.einsum("xy,nyz,nzx->n", amat, s_op, s_op) - lin
    total = a * a * pair - 2 * a * b * (q - 1) * lin + q * (q - 1) * b * b * np.trace(o)
    return np.real(total) / (q * (q - 1) * d)


def linear_values(psi: np.ndarray, phi: np.ndarray, o, rho, s: int) -> np.ndarray:
    """linear_single over stacked rows of any leading shape."""
    o, rho = as_matrix(o), as_matrix(rho)
    d = psi.shape[-1]
    a, b = snapshot_coefficients(d, s)
    ov = np.einsum("...a,...a->...", phi.conj(), phi @ o.T)
    rv = np.einsum("...a,...a->...", psi.conj(), psi @ rho.T)
    return np.real(a * ov * rv - b * np.trace(o))


# --------------------------------------------------------------------------
# median of means and friends
# --------------------------------------------------------------------------


def _check_residual(real: float, imag: float) -> None:
    if imag > IMAG_TOL * abs(real) + 1e-9 and imag > IMAG_TOL:
        raise ArithmeticError(f"imaginary residual {imag:.3g} too large for estimate {real:.6g}")


def _report(vals: list[float], imag: float, task: PredictionTask, shadow: ShadowData, q: int, R: int) -> EstimateReport:
    est = float(np.median(vals))
    _check_residual(est, imag)
    var = float(np.var(vals, ddof=1)) if R > 1 else float("nan")
    bound = oracles.prop1_bound(shadow.d, shadow.s, q, task.B, task.purity)
    return EstimateReport(
        estimate=est,
        batch_values=[float(v) for v in vals],
        empirical_variance=var,
        analytic_bound=bound,
        imag_residual=imag,
        task=task.label,
        d=shadow.d,
        s=shadow.s,
        m=shadow.m,
        q=q,
        R=R,
        queries=shadow.queries,
    )


def predict_many(shadow: ShadowData, tasks: list[PredictionTask], params: EstimatorParams | None = None) -> list[EstimateReport]:
    """One report per task; each batch's geometry is built once and reused for every task."""
    if not tasks:
        raise ValueError("no tasks given")
    params = params or EstimatorParams()
    for t in tasks:
        if t.d != shadow.d:
            raise DimensionError("task dimension does not match shadow data")
    R = params.R
    q = params.batch_size(shadow.m)
    vals = [[0.0] * R for _ in tasks]
    imag = [0.0] * len(tasks)
    for r in range(R):
        sl = slice(r * q, (r + 1) * q)
        geo = BatchGeometry.build(shadow.psi[sl], shadow.phi[sl], params.method)
        for k, t in enumerate(tasks):
            v, im = _finish(_batch_total(geo, t.O, t.rho, shadow.s), q, shadow.d)
            vals[k][r] = v
            imag[k] = max(imag[k], im)
    return [_report(vals[k], imag[k], t, shadow, q, R) for k, t in enumerate(tasks)]


def median_of_means(shadow: ShadowData, task: PredictionTask, params: EstimatorParams | None = None) -> EstimateReport:
    return predict_many(shadow, [task], params)[0]


def direct_mean_estimate(shadow: ShadowData, task: PredictionTask) -> EstimateReport:
    """Average of Tr[(O (x) rho^T) X_i] over all snapshots."""
    if shadow.m < 1:
        raise ValueError("need at least one snapshot")
    if task.d != shadow.d:
        raise DimensionError("task dimension does not match shadow data")
    vals = linear_values(shadow.psi, shadow.phi, task.O, task.rho, shadow.s)
    m = shadow.m
    var = float(np.var(vals, ddof=1) / m) if m > 1 else float("nan")
    d, s = shadow.d, shadow.s
    bound = oracles._c(None) * (1 + d**2 / s**2) * d * task.B / m
    return EstimateReport(
        estimate=float(vals.mean()),
        batch_values=[float(vals.mean())],
        empirical_variance=var,
        analytic_bound=bound,
        imag_residual=0.0,
        estimator="direct-mean",
        task=task.label,
        d=d,
        s=s,
        m=m,
        q=m,
        R=1,
        queries=shadow.queries,
    )

"""State ensembles, design checks, induced random density matrices and bounded observables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import clifford
from .qcore import (
    DensityOp,
    PureState,
    UnitaryOp,
    haar_state_vectors,
    operator_norm,
    partial_trace,
    sym_dim,
    sym_projector,
)

MAX_DESIGN_SIZE = 4096


@dataclass(frozen=True)
class StateEnsemble:
    dim: int
    states: np.ndarray  # (L, d) rows are normalized vectors
    weights: np.ndarray = field(default=None)
    design_order_claimed: int = 1

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        if states.shape[1] != self.dim:
            raise ValueError("state dimension mismatch")
        if np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) > 1e-10:
            raise ValueError("ensemble contains unnormalized states")
        w = self.weights
        w = np.full(len(states), 1 / len(states)) if w is None else np.asarray(w, dtype=float)
        if abs(w.sum() - 1) > 1e-12 or np.any(w < 0):
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class Observable:
    """Hermitian observable with its Frobenius-square and operator norm on record."""

    matrix: np.ndarray
    frobenius_sq: float = None
    op_norm: float = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("observable must be a square matrix")
        if np.max(np.abs(m - m.conj().T)) > 1e-9:
            raise ValueError("observable is not Hermitian")
        object.__setattr__(self, "matrix", m)
        if self.frobenius_sq is None:
            object.__setattr__(self, "frobenius_sq", float(np.real(np.vdot(m, m))))
        if self.op_norm is None:
            object.__setattr__(self, "op_norm", operator_norm(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def in_obs(self, budget: float, tol: float = 1e-9) -> bool:
        """Membership in Obs(B): Tr(O^2) <= B and ||O|| <= 1."""
        return self.frobenius_sq <= budget + tol and self.op_norm <= 1 + tol


@dataclass(frozen=True)
class DesignReport:
    t: int
    max_dev: float


# --------------------------------------------------------------------------
# Clifford-based ensembles
# --------------------------------------------------------------------------


def random_clifford(n: int, rng: np.random.Generator) -> UnitaryOp:
    if n not in (1, 2, 3):
        raise ValueError("random_clifford supports n in {1, 2, 3}")
    return UnitaryOp(clifford.random_clifford_matrix(n, rng))


def stabilizer_ensemble(n: int) -> StateEnsemble:
    """Uniform ensemble over the n-qubit stabilizer states (the Clifford orbit of |0^n>)."""
    states = clifford.stabilizer_states(n)
    return StateEnsemble(dim=2**n, states=states, design_order_claimed=3)


def verify_design(e: StateEnsemble, t: int) -> DesignReport:
    d = e.dim
    if t < 1 or t > 4 or d**t > MAX_DESIGN_SIZE:
        raise OverflowError(f"d^t = {d}^{t} exceeds the supported envelope")
    # sum_i w_i psi_i^{(x) t} via stacked t-fold kron products
    v = e.states
    for _ in range(t - 1):
        v = np.einsum("la,lb->lab", v, e.states).reshape(len(e.states), -1)
    moment = (v.T * e.weights) @ v.conj()
    target = sym_projector(t, d) / sym_dim(t, d)
    return DesignReport(t=t, max_dev=float(np.max(np.abs(moment - target))))


# --------------------------------------------------------------------------
# random states
# --------------------------------------------------------------------------


def induced_density(d: int, lam: int, rng: np.random.Generator) -> DensityOp:
    """rho = Tr_env |phi><phi| for Haar |phi> on C^d (x) C^lambda."""
    if d < 1 or lam < 1:
        raise ValueError("d and lambda must be positive")
    phi = haar_state_vectors(1, d * lam, rng)[0]
    rho = partial_trace(np.outer(phi, phi.conj()), keep=0, dims=(d, lam))
    return DensityOp(_hermitize(rho))


def induced_density_batch(count: int, d: int, lam: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized draw of ``count`` matrices from the induced distribution, shape (count, d, d)."""
    phi = haar_state_vectors(count, d * lam, rng).reshape(count, d, lam)
    rho = np.einsum("nai,nbi->nab", phi, phi.conj())
    return 0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))


def average_induced_purity(d: int, lam: int) -> float:
    return (d + lam) / (lam * d + 1)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------

OBSERVABLE_STYLES = ("gue", "pauli", "scaled-identity")


def random_observable(d: int, budget: float, rng: np.random.Generator, style: str = "gue") -> Observable:
    """Draw a Hermitian O certified to lie in Obs(budget)."""
    if not 1 <= budget <= d:
        raise ValueError(f"budget B={budget} must satisfy 1 <= B <= d={d}")
    if style == "scaled-identity":
        m = math.sqrt(budget / d) * np.eye(d, dtype=complex)
    elif style == "pauli":
        n = int(round(math.log2(d)))
        if 2**n != d:
            raise ValueError("pauli style needs d = 2^n")
        labels = clifford.all_pauli_labels(n)
        p = clifford.pauli_string(labels[rng.integers(len(labels))])
        # Tr(P^2) = d; rescale so the budget holds
        m = p * min(1.0, math.sqrt(budget / d))
    elif style == "gue":
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        h = (g + g.conj().T) / 2
        evals = np.linalg.eigvalsh(h)
        scale = max(1.0, float(np.max(np.abs(evals))), math.sqrt(float(np.sum(evals**2)) / budget))
        m = h / scale
    else:
        raise ValueError(f"unknown observable style {style!r}")
    obs = Observable(m)
    if not obs.in_obs(budget):
        raise ValueError("observable failed Obs(B) certification")
    return obs

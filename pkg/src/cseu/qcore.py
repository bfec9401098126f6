"""Dense complex linear algebra and quantum-information primitives.

Operators are plain ``numpy`` complex arrays in row-major order. Multi-system
operators use the convention that subsystem 0 is the most significant tensor
factor, so ``kron(A, B)`` acts with ``A`` on subsystem 0.

Permutations are 0-based image tuples: ``perm[i]`` is the slot that tensor
factor ``i`` is moved to, i.e. ``T_pi |v_0 ... v_{t-1}> = |v_{pi^-1(0)} ...>``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

CONSTRUCT_TOL = 1e-10
ARITH_TOL = 1e-8


class DimensionError(ValueError):
    """Raised when operator shapes do not match the requested factorization."""


class ConvergenceError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# value types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PureState:
    """Normalized state vector."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("state has non-finite amplitudes")
        if abs(np.vdot(v, v).real - 1.0) > CONSTRUCT_TOL:
            raise ValueError("state is not normalized")
        object.__setattr__(self, "vec", v)

    @property
    def dim(self) -> int:
        return self.vec.shape[0]

    def projector(self) -> np.ndarray:
        return np.outer(self.vec, self.vec.conj())

    @classmethod
    def basis(cls, d: int, index: int) -> "PureState":
        v = np.zeros(d, dtype=complex)
        v[index] = 1.0
        return cls(v)


@dataclass(frozen=True)
class DensityOp:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _require_square(m)
        if not np.all(np.isfinite(m)):
            raise ValueError("density matrix has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > CONSTRUCT_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > CONSTRUCT_TOL:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(m).min() < -1e-9:
            raise ValueError("density matrix has negative eigenvalues")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    @classmethod
    def from_state(cls, state: PureState | np.ndarray) -> "DensityOp":
        v = state.vec if isinstance(state, PureState) else np.asarray(state)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityOp":
        return cls(np.eye(d, dtype=complex) / d)


@dataclass(frozen=True)
class UnitaryOp:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _require_square(m)
        if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) > 1e-9:
            raise ValueError("matrix is not unitary")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return self.matrix @ rho @ self.matrix.conj().T


@dataclass(frozen=True)
class ChoiOp:
    """Unnormalized Choi operator on (output, input) of a d-dimensional channel."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _require_square(m)
        d = math.isqrt(m.shape[0])
        if d * d != m.shape[0]:
            raise DimensionError("Choi operator size must be a perfect square")
        if np.max(np.abs(m - m.conj().T)) > ARITH_TOL:
            raise ValueError("Choi operator is not Hermitian")
        if abs(np.trace(m) - d) > ARITH_TOL:
            raise ValueError("Choi operator trace differs from d")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return math.isqrt(self.matrix.shape[0])


def _require_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")


def as_matrix(x) -> np.ndarray:
    """Unwrap any of the operator types into a bare complex array."""
    if isinstance(x, (DensityOp, UnitaryOp, ChoiOp)):
        return x.matrix
    if isinstance(x, PureState):
        return x.vec
    if hasattr(x, "matrix"):
        return np.asarray(x.matrix, dtype=complex)
    return np.asarray(x, dtype=complex)


# --------------------------------------------------------------------------
# tensor structure
# --------------------------------------------------------------------------


def tensor_product(*ops) -> np.ndarray:
    """Kronecker product of one or more operators (or vectors)."""
    out = as_matrix(ops[0])
    for op in ops[1:]:
        out = np.kron(out, as_matrix(op))
    return out


def _check_dims(m: np.ndarray, dims: Sequence[int]) -> None:
    _require_square(m)
    if math.prod(dims) != m.shape[0]:
        raise DimensionError(f"dims {tuple(dims)} do not factor size {m.shape[0]}")


def partial_trace(m, keep: int | Iterable[int], dims: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``."""
    m = as_matrix(m)
    dims = tuple(int(x) for x in dims)
    _check_dims(m, dims)
    keep = sorted({keep} if isinstance(keep, int) else set(keep))
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError("subsystem index out of range")
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    res = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    dk = math.prod(dims[i] for i in keep)
    return res.reshape(dk, dk)


def partial_transpose(m, subsystem: int | Iterable[int], dims: Sequence[int]) -> np.ndarray:
    """Transpose the indices of the chosen subsystem(s) only."""
    m = as_matrix(m)
    dims = tuple(int(x) for x in dims)
    _check_dims(m, dims)
    subs = {subsystem} if isinstance(subsystem, int) else set(subsystem)
    n = len(dims)
    if any(k < 0 or k >= n for k in subs):
        raise DimensionError("subsystem index out of range")
    axes = list(range(2 * n))
    for k in subs:
        axes[k], axes[n + k] = n + k, k
    return m.reshape(dims + dims).transpose(axes).reshape(m.shape)


def permute_systems(m, perm: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Return ``T_pi m T_pi^dagger`` for subsystems of possibly unequal size."""
    m = as_matrix(m)
    dims = tuple(dims)
    _check_dims(m, dims)
    n = len(dims)
    inv = np.argsort(perm)
    t = m.reshape(dims + dims).transpose(list(inv) + [n + i for i in inv])
    size = m.shape[0]
    return t.reshape(size, size)


# --------------------------------------------------------------------------
# permutation operators and symmetric projectors
# --------------------------------------------------------------------------


def perm_from_cycles(cycles: Sequence[Sequence[int]], t: int) -> tuple[int, ...]:
    """Convert 1-based cycle notation, e.g. ``[(1, 5), (2, 6)]``, to an image tuple."""
    perm = list(range(t))
    for cyc in cycles:
        cyc = [c - 1 for c in cyc]
        if any(not 0 <= c < t for c in cyc):
            raise ValueError(f"cycle entry outside 1..{t}")
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            perm[a] = b
    if sorted(perm) != list(range(t)):
        raise ValueError("cycles do not define a permutation")
    return tuple(perm)


def compose(p1: Sequence[int], p2: Sequence[int]) -> tuple[int, ...]:
    """(p1 o p2)(i) = p1(p2(i))."""
    return tuple(p1[p2[i]] for i in range(len(p2)))


def permutation_operator(perm: Sequence[int], t: int | None = None, d: int = 2) -> np.ndarray:
    perm = tuple(int(p) for p in perm)
    t = len(perm) if t is None else t
    if len(perm) != t or sorted(perm) != list(range(t)):
        raise ValueError(f"{perm} is not a permutation of {t} items")
    return _permutation_operator(perm, d).copy()


@lru_cache(maxsize=256)
def _permutation_operator(perm: tuple[int, ...], d: int) -> np.ndarray:
    t = len(perm)
    ident = np.eye(d**t, dtype=complex).reshape((d,) * (2 * t))
    inv = np.argsort(perm)
    axes = list(inv) + list(range(t, 2 * t))
    return np.ascontiguousarray(ident.transpose(axes).reshape(d**t, d**t))


def sym_dim(t: int, d: int) -> int:
    """Dimension kappa_t of the symmetric subspace of t copies."""
    return math.comb(t + d - 1, t)


def sym_projector(t: int, d: int) -> np.ndarray:
    if t < 1:
        raise ValueError("t must be at least 1")
    return _sym_projector(t, d).copy()


@lru_cache(maxsize=32)
def _sym_projector(t: int, d: int) -> np.ndarray:
    acc = np.zeros((d**t, d**t), dtype=complex)
    for perm in itertools.permutations(range(t)):
        acc += _permutation_operator(perm, d)
    return acc / math.factorial(t)


def embed(op: np.ndarray, systems: Sequence[int], n: int, d: int) -> np.ndarray:
    """Place ``op`` (acting on ``len(systems)`` factors, in that order) inside n copies."""
    op = as_matrix(op)
    k = len(systems)
    rest = [i for i in range(n) if i not in systems]
    full = np.kron(op, np.eye(d ** (n - k), dtype=complex))
    # full acts as (systems..., rest...) -> move factor j to slot order[j]
    order = list(systems) + rest
    return permute_systems(full, order, (d,) * n)


# --------------------------------------------------------------------------
# random objects
# --------------------------------------------------------------------------


def haar_unitary(d: int, rng: np.random.Generator) -> UnitaryOp:
    """Haar-random unitary via QR of a Ginibre matrix with phase correction."""
    if d < 2:
        raise ValueError("d must be at least 2")
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return UnitaryOp(q * (diag / np.abs(diag)))


def haar_state_vectors(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Haar-random state vectors stacked as rows."""
    z = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_state(d: int, rng: np.random.Generator) -> PureState:
    if d < 2:
        raise ValueError("d must be at least 2")
    return PureState(haar_state_vectors(1, d, rng)[0])


# --------------------------------------------------------------------------
# channels and norms
# --------------------------------------------------------------------------


def choi_of_unitary(u) -> ChoiOp:
    """(U (x) I)|Phi><Phi|(U (x) I)^dagger with |Phi> = sum_i |ii> unnormalized."""
    m = as_matrix(u)
    v = m.reshape(-1)
    return ChoiOp(np.outer(v, v.conj()))


def operator_norm(m, tol: float = 1e-12, max_iter: int = 20000) -> float:
    """Largest singular value by power iteration on ``m^dagger m``."""
    m = as_matrix(m)
    if m.ndim != 2:
        raise DimensionError("operator_norm expects a matrix")
    g = m.conj().T @ m
    n = g.shape[0]
    if not np.any(g):
        return 0.0
    # deterministic start with weight on every direction
    v = np.ones(n, dtype=complex) + 1j * np.linspace(0.1, 0.9, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = g @ v
        new = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return math.sqrt(max(new, 0.0))
        lam = new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def is_hermitian(m, tol: float = 1e-9) -> bool:
    m = as_matrix(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def purity(rho) -> float:
    m = as_matrix(rho)
    return float(np.real(np.vdot(m, m)))

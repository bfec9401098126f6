"""Uniform sampling from the n-qubit Clifford group, returned as dense unitaries.

Two exact routes:

* ``n <= 2``: the group (modulo global phase) is enumerated once by
  breadth-first search over {H, S, CNOT}; sampling is a uniform index draw.
* any ``n``: a uniformly random symplectic matrix over GF(2) is built one
  symplectic pair at a time, given uniformly random Pauli signs, and lifted to
  a unitary by reading off the images of X_k and Z_k.

Both give the Haar measure on Cl(n)/U(1). The second is used for ``n = 3``,
where the group has 92,897,280 elements.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)

PAULI_1Q = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}
GROUP_ORDER = {1: 24, 2: 11520, 3: 92897280}


def pauli_string(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as ``"XZ"`` (qubit 0 leftmost)."""
    out = np.ones((1, 1), dtype=complex)
    for ch in label.upper():
        out = np.kron(out, PAULI_1Q[ch])
    return out


def all_pauli_labels(n: int, include_identity: bool = False) -> list[str]:
    labels = [""]
    for _ in range(n):
        labels = [p + c for p in labels for c in "IXYZ"]
    if not include_identity:
        labels = [p for p in labels if set(p) != {"I"}]
    return labels


def _single(g: np.ndarray, k: int, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for j in range(n):
        out = np.kron(out, g if j == k else _I2)
    return out


def _cnot(c: int, t: int, n: int) -> np.ndarray:
    d = 2**n
    m = np.zeros((d, d), dtype=complex)
    for b in range(d):
        bits = [(b >> (n - 1 - j)) & 1 for j in range(n)]
        if bits[c]:
            bits[t] ^= 1
        b2 = sum(bit << (n - 1 - j) for j, bit in enumerate(bits))
        m[b2, b] = 1
    return m


def generators(n: int) -> list[np.ndarray]:
    gens = []
    for k in range(n):
        gens.append(_single(_H, k, n))
        gens.append(_single(_S, k, n))
    for c in range(n):
        for t in range(n):
            if c != t:
                gens.append(_cnot(c, t, n))
    return gens


def _phase_key(u: np.ndarray) -> bytes:
    flat = u.reshape(-1)
    idx = int(np.argmax(np.abs(flat) > 1e-6))
    v = flat * (abs(flat[idx]) / flat[idx])
    v = np.round(v, 8) + (0.0 + 0.0j)  # normalizes -0.0
    return v.tobytes()


def canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.reshape(-1)
    idx = int(np.argmax(np.abs(flat) > 1e-6))
    return u * (abs(flat[idx]) / flat[idx])


@lru_cache(maxsize=2)
def enumerate_group(n: int) -> np.ndarray:
    """All Clifford unitaries on n <= 2 qubits, one representative per global phase."""
    if n not in (1, 2):
        raise ValueError("explicit enumeration is supported for n in {1, 2}")
    gens = generators(n)
    ident = np.eye(2**n, dtype=complex)
    seen = {_phase_key(ident): ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                w = g @ u
                key = _phase_key(w)
                if key not in seen:
                    w = canonical_phase(w)
                    seen[key] = w
                    nxt.append(w)
        frontier = nxt
    group = np.array(list(seen.values()))
    if len(group) != GROUP_ORDER[n]:
        raise RuntimeError(f"enumerated {len(group)} elements, expected {GROUP_ORDER[n]}")
    group.setflags(write=False)
    return group


@lru_cache(maxsize=4)
def stabilizer_states(n: int) -> np.ndarray:
    """Stabilizer states on n qubits (one vector per ray), via BFS from |0...0>."""
    gens = generators(n)
    d = 2**n
    v0 = np.zeros(d, dtype=complex)
    v0[0] = 1
    seen = {_phase_key(v0): v0}
    frontier = [v0]
    while frontier:
        nxt = []
        for v in frontier:
            for g in gens:
                w = g @ v
                key = _phase_key(w)
                if key not in seen:
                    seen[key] = canonical_phase(w)
                    nxt.append(seen[key])
        frontier = nxt
    out = np.array(list(seen.values()))
    out.setflags(write=False)
    return out


# --------------------------------------------------------------------------
# symplectic route
# --------------------------------------------------------------------------


def _symp_form(a: np.ndarray, b: np.ndarray, n: int) -> int:
    return int((a[:n] @ b[n:] + a[n:] @ b[:n]) % 2)


def random_symplectic(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform element of Sp(2n, 2) as columns (x_1, z_1, ..., x_n, z_n).

    Each column pair is drawn uniformly among vectors compatible with the
    pairs already chosen; the number of such choices does not depend on the
    earlier draws, so the ordered symplectic basis is uniform.
    """
    cols: list[np.ndarray] = []
    for _ in range(n):
        while True:
            x = rng.integers(0, 2, 2 * n)
            if x.any() and all(_symp_form(x, c, n) == 0 for c in cols):
                break
        while True:
            z = rng.integers(0, 2, 2 * n)
            if _symp_form(x, z, n) == 1 and all(_symp_form(z, c, n) == 0 for c in cols):
                break
        cols += [x, z]
    return np.array(cols).T


def _pauli_from_bits(v: np.ndarray, n: int) -> np.ndarray:
    """Hermitian Pauli i^{x.z} X^x Z^z (per qubit this is the familiar I, X, Y, Z)."""
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        x, z = int(v[k]), int(v[n + k])
        out = np.kron(out, {(0, 0): _I2, (1, 0): _X, (1, 1): _Y, (0, 1): _Z}[(x, z)])
    return out


def clifford_from_tableau(symp: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Unitary U with U X_k U^dag = s_k P(x_k) and U Z_k U^dag = s'_k P(z_k)."""
    n = symp.shape[0] // 2
    d = 2**n
    x_img = []
    z_img = []
    for k in range(n):
        x_img.append((-1) ** int(signs[2 * k]) * _pauli_from_bits(symp[:, 2 * k], n))
        z_img.append((-1) ** int(signs[2 * k + 1]) * _pauli_from_bits(symp[:, 2 * k + 1], n))
    proj = np.eye(d, dtype=complex)
    for p in z_img:
        proj = proj @ (np.eye(d) + p) / 2
    col = int(np.argmax(np.linalg.norm(proj, axis=0)))
    s0 = proj[:, col] / np.linalg.norm(proj[:, col])
    u = np.zeros((d, d), dtype=complex)
    for b in range(d):
        v = s0
        for k in range(n):
            # qubit 0 is the most significant bit
            if (b >> (n - 1 - k)) & 1:
                v = x_img[k] @ v
        u[:, b] = v
    return u


def random_clifford_symplectic(n: int, rng: np.random.Generator) -> np.ndarray:
    symp = random_symplectic(n, rng)
    signs = rng.integers(0, 2, 2 * n)
    return clifford_from_tableau(symp, signs)


def random_clifford_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    if n in (1, 2):
        group = enumerate_group(n)
        return np.array(group[rng.integers(len(group))])
    if n == 3:
        return random_clifford_symplectic(n, rng)
    raise ValueError("random Clifford sampling supports n in {1, 2, 3}")


def random_clifford_batch(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent uniform Cliffords stacked as (count, d, d)."""
    if n in (1, 2):
        group = enumerate_group(n)
        return group[rng.integers(len(group), size=count)]
    return np.array([random_clifford_matrix(n, rng) for _ in range(count)])


def maps_paulis_to_paulis(u: np.ndarray, n: int, tol: float = 1e-9) -> bool:
    """Check that conjugation by ``u`` sends every nontrivial Pauli to a signed Pauli."""
    d = 2**n
    labels = all_pauli_labels(n)
    table = np.array([pauli_string(q).reshape(-1) for q in labels])
    for label in labels:
        img = u @ pauli_string(label) @ u.conj().T
        overlaps = table.conj() @ img.reshape(-1) / d
        k = int(np.argmax(np.abs(overlaps)))
        if abs(abs(overlaps[k].real) - 1) > tol or abs(overlaps[k].imag) > tol:
            return False
    return True

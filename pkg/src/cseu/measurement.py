"""Learning phase: random inputs, the unitary, and the symmetric collective measurement.

The finite (s+2)-design POVM is replaced by its Haar limit. Given the rotated
state |out>, the outcome density relative to the Haar measure is
kappa_s |<phi|out>|^{2s}; this is sampled exactly by drawing the overlap
x ~ Beta(s+1, d-1), a Haar direction orthogonal to |out>, and a phase.
"""

from __future__ import annotations

import io
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import clifford
from .qcore import PureState, UnitaryOp, as_matrix, haar_state_vectors
from .rng import stream

MODES = ("continuous-haar", "rgcm")
BLOCK_SIZE = 512
SHADOW_MAGIC = b"CSEUSHD1"
SHADOW_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CollectiveMeasurementSpec:
    s: int = 1
    mode: str = "continuous-haar"

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "rgcm" and self.s != 1:
            raise ValueError("rgcm mode requires s = 1")


@dataclass(frozen=True)
class Snapshot:
    """One round: prepared state psi, outcome state phi."""

    psi: np.ndarray
    phi: np.ndarray
    s: int

    @property
    def d(self) -> int:
        return self.psi.shape[0]

    def dense(self) -> np.ndarray:
        """The d^2 x d^2 snapshot X = a (phi (x) psi^T) - b I. For cross-checks only."""
        from .estimator import snapshot_coefficients

        d = self.d
        a, b = snapshot_coefficients(d, self.s)
        p = np.kron(np.outer(self.phi, self.phi.conj()), np.outer(self.psi, self.psi.conj()).T)
        return a * p - b * np.eye(d * d)


@dataclass
class ShadowData:
    """m snapshots stored as stacked state vectors (rows)."""

    psi: np.ndarray  # (m, d)
    phi: np.ndarray  # (m, d)
    spec: CollectiveMeasurementSpec
    seed: int = 0
    unitary_label: str = ""
    _gram_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.psi = np.ascontiguousarray(self.psi, dtype=complex)
        self.phi = np.ascontiguousarray(self.phi, dtype=complex)
        if self.psi.shape != self.phi.shape or self.psi.ndim != 2:
            raise ValueError("psi and phi must share shape (m, d)")

    @property
    def m(self) -> int:
        return self.psi.shape[0]

    @property
    def d(self) -> int:
        return self.psi.shape[1]

    @property
    def s(self) -> int:
        return self.spec.s

    @property
    def queries(self) -> int:
        return self.m * self.spec.s

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, i: int) -> Snapshot:
        return Snapshot(self.psi[i], self.phi[i], self.spec.s)

    def __iter__(self) -> Iterator[Snapshot]:
        return (self[i] for i in range(self.m))

    def subset(self, start: int, stop: int) -> "ShadowData":
        return ShadowData(self.psi[start:stop], self.phi[start:stop], self.spec, self.seed, self.unitary_label)

    def header(self) -> dict:
        return {
            "format": "cseu-shadow",
            "version": SHADOW_FORMAT_VERSION,
            "d": self.d,
            "s": self.spec.s,
            "m": self.m,
            "mode": self.spec.mode,
            "seed": int(self.seed),
            "unitary_label": self.unitary_label,
            "dtype": "complex128-le",
            "layout": "per-snapshot [psi(d), phi(d)]",
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode()
        body = np.stack([self.psi, self.phi], axis=1).astype("<c16").tobytes()
        return SHADOW_MAGIC + struct.pack("<I", len(head)) + head + body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ShadowData":
        buf = io.BytesIO(raw)
        if buf.read(len(SHADOW_MAGIC)) != SHADOW_MAGIC:
            raise ValueError("not a cseu shadow file")
        (n,) = struct.unpack("<I", buf.read(4))
        head = json.loads(buf.read(n).decode())
        if head.get("version") != SHADOW_FORMAT_VERSION:
            raise ValueError(f"unsupported shadow format version {head.get('version')}")
        m, d = head["m"], head["d"]
        arr = np.frombuffer(buf.read(), dtype="<c16")
        if arr.size != m * 2 * d:
            raise ValueError("shadow body size does not match header")
        arr = arr.reshape(m, 2, d).astype(complex)
        spec = CollectiveMeasurementSpec(head["s"], head["mode"])
        return cls(arr[:, 0], arr[:, 1], spec, head["seed"], head["unitary_label"])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ShadowData":
        return cls.from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# samplers (vectorized over rows)
# --------------------------------------------------------------------------


def collective_outcomes(outputs: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome states of M_s applied to |out>^{(x)s}, one per row of ``outputs``."""
    outputs = np.atleast_2d(outputs)
    count, d = outputs.shape
    if d == 1:
        return outputs.copy()
    g1 = rng.standard_gamma(s + 1, size=count)
    g2 = rng.standard_gamma(d - 1, size=count)
    x = g1 / (g1 + g2)
    z = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    z -= np.sum(outputs.conj() * z, axis=1, keepdims=True) * outputs
    perp = z / np.linalg.norm(z, axis=1, keepdims=True)
    phase = np.exp(2j * np.pi * rng.random(count))
    return np.sqrt(x)[:, None] * outputs + (phase * np.sqrt(1 - x))[:, None] * perp


def sample_collective_outcome(output, s: int, rng: np.random.Generator) -> PureState:
    v = as_matrix(output).reshape(1, -1)
    return PureState(_normalize(collective_outcomes(v, s, rng))[0])


def _n_qubits(d: int) -> int:
    n = int(round(math.log2(d)))
    if 2**n != d or n not in (1, 2, 3):
        raise ValueError("rgcm needs d = 2^n with n in {1, 2, 3}")
    return n


def rgcm_outcomes(outputs: np.ndarray, rng: np.random.Generator, cliffords: np.ndarray | None = None) -> np.ndarray:
    """Random global Clifford measurement: phi = V^dag |b>, b ~ |<b|V|out>|^2.

    With explicit ``cliffords`` the circuit is simulated as written. Otherwise
    the outcome is drawn from its marginal: every stabilizer state lies in the
    basis of a uniform Clifford with probability d/K, so
    Pr[phi] = (d/K) |<phi|out>|^2 over the K stabilizer states.
    """
    outputs = np.atleast_2d(outputs)
    count, d = outputs.shape
    n = _n_qubits(d)
    if cliffords is None:
        return _stabilizer_outcomes(outputs, clifford.stabilizer_states(n), rng)
    v = np.asarray(cliffords)
    rotated = np.einsum("nab,nb->na", v, outputs)
    b = _categorical(np.abs(rotated) ** 2, rng)
    # row b of V, conjugated, is V^dag |b>
    return np.conj(v[np.arange(count), b, :])


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    b = (cdf < rng.random((probs.shape[0], 1))).sum(axis=1)
    return np.minimum(b, probs.shape[1] - 1)


def _stabilizer_outcomes(outputs: np.ndarray, stab: np.ndarray, rng: np.random.Generator, chunk: int = 4096) -> np.ndarray:
    idx = np.empty(len(outputs), dtype=np.int64)
    for lo in range(0, len(outputs), chunk):
        probs = np.abs(outputs[lo : lo + chunk] @ stab.conj().T) ** 2
        idx[lo : lo + chunk] = _categorical(probs, rng)
    return np.array(stab[idx])


def sample_rgcm_outcome(output, rng: np.random.Generator, clifford_matrix: np.ndarray | None = None) -> PureState:
    v = as_matrix(output).reshape(1, -1)
    cl = None if clifford_matrix is None else np.asarray(clifford_matrix)[None]
    return PureState(_normalize(rgcm_outcomes(v, rng, cl))[0])


def prepared_states(count: int, d: int, spec: CollectiveMeasurementSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.mode == "rgcm":
        # V|0^n> for uniform Clifford V is uniform over stabilizer states
        stab = clifford.stabilizer_states(_n_qubits(d))
        return np.array(stab[rng.integers(len(stab), size=count)])
    return haar_state_vectors(count, d, rng)


def sample_rounds(
    u, spec: CollectiveMeasurementSpec, count: int, rng: np.random.Generator, psi: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Run ``count`` independent learning rounds; returns stacked (psi, phi)."""
    umat = as_matrix(u)
    d = umat.shape[0]
    if psi is None:
        psi = prepared_states(count, d, spec, rng)
    else:
        psi = np.broadcast_to(np.atleast_2d(psi), (count, d)).copy()
    out = psi @ umat.T
    if spec.mode == "rgcm":
        phi = rgcm_outcomes(out, rng)
    else:
        phi = collective_outcomes(out, spec.s, rng)
    return psi, _normalize(phi)


def learning_round(u, spec: CollectiveMeasurementSpec, rng: np.random.Generator, psi=None) -> Snapshot:
    fixed = None if psi is None else as_matrix(psi).reshape(1, -1)
    p, f = sample_rounds(u, spec, 1, rng, fixed)
    return Snapshot(p[0], f[0], spec.s)


def run_learning(
    u,
    spec: CollectiveMeasurementSpec,
    m: int,
    seed: int,
    unitary_label: str = "",
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> ShadowData:
    """m independent rounds; block k draws from stream (seed, measurement, k)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    umat = as_matrix(u)
    d = umat.shape[0]
    nblocks = -(-m // block_size)

    def block(k: int):
        count = min(block_size, m - k * block_size)
        return sample_rounds(umat, spec, count, stream(seed, "measurement", k))

    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, range(nblocks)))
    else:
        parts = [block(k) for k in range(nblocks)]
    psi = np.concatenate([p for p, _ in parts]) if parts else np.zeros((0, d), complex)
    phi = np.concatenate([f for _, f in parts])
    return ShadowData(psi, phi, spec, seed, unitary_label)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)

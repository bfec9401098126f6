"""JSON experiment configuration with CLI overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..measurement import MODES

MAX_QUBITS = 4
STATE_SOURCES = ("haar-pure", "maximally-mixed", "induced")
UNITARY_KINDS = ("haar", "identity", "clifford")


class ConfigError(ValueError):
    pass


@dataclass
class TaskSpec:
    observable_style: str = "gue"
    B: float = 1.0
    state_source: str = "haar-pure"
    lam: int = 1
    count: int = 1


@dataclass
class OtocSpec:
    W: str = "random"  # Pauli label, or "random" for a random anticommuting pair
    V: str = "random"
    count: int = 1


@dataclass
class ScanSpec:
    n_list: list = field(default_factory=lambda: [1])
    s_list: list = field(default_factory=lambda: [1, 2])
    q_list: list = field(default_factory=lambda: [4, 16])
    B_list: list = field(default_factory=lambda: [1.0])
    lam_list: list = field(default_factory=lambda: [1])
    batches: int = 200
    observable_style: str = "pauli"
    epsilon: float = 0.1
    delta: float = 0.05
    M: int = 1


@dataclass
class Thresholds:
    se: float = 5.0
    ks_p: float = 0.01


@dataclass
class ExperimentConfig:
    n: int = 1
    s: int = 1
    m: int = 1000
    R: int = 1
    mode: str = "continuous-haar"
    seed: int = 0
    unitary: str = "haar"
    tasks: list = field(default_factory=lambda: [TaskSpec()])
    otoc: list = field(default_factory=lambda: [OtocSpec()])
    scan: ScanSpec = field(default_factory=ScanSpec)
    thresholds: Thresholds = field(default_factory=Thresholds)
    repeats: int = 1
    shadow_file: str = ""
    output: str = "out"
    threads: int = 1
    calibration_batches: int = 1000
    write_constants: str = ""

    @property
    def d(self) -> int:
        return 2**self.n

    def validate(self) -> "ExperimentConfig":
        if not 1 <= self.n <= MAX_QUBITS:
            raise ConfigError(f"n={self.n}: need 1 <= n <= {MAX_QUBITS} (d <= 16)")
        if self.s < 1:
            raise ConfigError("s must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode == "rgcm" and (self.s != 1 or self.n > 3):
            raise ConfigError("rgcm needs s = 1 and n <= 3")
        if self.R < 1 or self.m < 2 * self.R:
            raise ConfigError(f"need m >= 2R (m={self.m}, R={self.R})")
        if self.unitary not in UNITARY_KINDS:
            raise ConfigError(f"unitary must be one of {UNITARY_KINDS}")
        if self.unitary == "clifford" and self.n > 3:
            raise ConfigError("clifford unitaries need n <= 3")
        for t in self.tasks:
            if not 1 <= t.B <= self.d:
                raise ConfigError(f"task budget B={t.B} outside [1, d={self.d}]")
            if t.state_source not in STATE_SOURCES:
                raise ConfigError(f"state_source must be one of {STATE_SOURCES}")
            if t.lam < 1 or t.count < 1:
                raise ConfigError("lam and count must be positive")
        if self.threads < 1 or self.repeats < 1:
            raise ConfigError("threads and repeats must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(raw)
        try:
            if "tasks" in kw:
                kw["tasks"] = [TaskSpec(**t) for t in kw["tasks"]]
            if "otoc" in kw:
                kw["otoc"] = [OtocSpec(**t) for t in kw["otoc"]]
            if "scan" in kw:
                kw["scan"] = ScanSpec(**kw["scan"])
            if "thresholds" in kw:
                kw["thresholds"] = Thresholds(**kw["thresholds"])
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, **overrides) -> ExperimentConfig:
    raw: dict = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(raw).validate()

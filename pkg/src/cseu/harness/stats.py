"""Small statistical helpers used by the validation suite and experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

MIN_KS_SAMPLES = 100


@dataclass
class StatReport:
    mean: float
    variance: float
    se: float
    samples: int
    ks_statistic: float | None = None
    ks_pvalue: float | None = None
    verdicts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts.values())

    def add_verdict(self, name: str, passed: bool, **info) -> None:
        self.verdicts[name] = {"pass": bool(passed), **info}


def summarize(samples) -> StatReport:
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    var = float(np.var(x, ddof=1)) if n > 1 else float("nan")
    return StatReport(float(np.mean(x)), var, math.sqrt(var / n) if n > 1 else float("nan"), n)


def ks_test(samples, cdf: Callable) -> tuple[float, float]:
    """One-sample KS statistic with asymptotic p-value."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_KS_SAMPLES:
        raise ValueError(f"ks_test needs at least {MIN_KS_SAMPLES} samples")
    res = sps.kstest(x, cdf, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_2samp(a, b) -> tuple[float, float]:
    res = sps.ks_2samp(np.ravel(a), np.ravel(b), method="asymp")
    return float(res.statistic), float(res.pvalue)


def mean_se(samples, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Entrywise mean and standard error; complex entries use the real and imaginary parts jointly."""
    x = np.asarray(samples)
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    if np.iscomplexobj(x):
        sr = x.real.std(axis=axis, ddof=1)
        si = x.imag.std(axis=axis, ddof=1)
        return mean, np.sqrt(sr**2 + si**2) / math.sqrt(n)
    return mean, x.std(axis=axis, ddof=1) / math.sqrt(n)


def max_z(mean, target, se, floor: float = 1e-12) -> float:
    """Largest |mean - target| / se over entries; entries with se below ``floor`` must match to ``floor``."""
    mean, target, se = np.asarray(mean), np.asarray(target), np.asarray(se)
    dev = np.abs(mean - target)
    tiny = se < floor
    if np.any(dev[tiny] > 10 * floor):
        return float("inf")
    z = np.where(tiny, 0.0, dev / np.where(tiny, 1.0, se))
    return float(np.max(z))


def variance_se(samples) -> float:
    """Standard error of the sample variance, from the fourth central moment."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    c = x - x.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    return float(math.sqrt(max(m4 - (n - 3) / (n - 1) * m2**2, 0.0) / n))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def chunked_mean_se(draw: Callable[[int, int], np.ndarray], total: int, chunk: int = 20000):
    """mean_se over ``total`` samples produced ``chunk`` at a time by draw(chunk_index, count)."""
    s1 = s2 = None
    n = 0
    for k, start in enumerate(range(0, total, chunk)):
        x = np.asarray(draw(k, min(chunk, total - start)))
        a, b = x.sum(axis=0), (np.abs(x) ** 2).sum(axis=0)
        s1, s2 = (a, b) if s1 is None else (s1 + a, s2 + b)
        n += x.shape[0]
    mean = s1 / n
    var = np.maximum(s2 / n - np.abs(mean) ** 2, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)

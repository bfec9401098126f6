"""cseu-sim command line: learn, predict, otoc, validate, scan, calibrate."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .. import clifford, constants
from ..estimator import SCHEMA_VERSION, EstimatorParams, direct_mean_estimate, predict_many, reports_to_csv
from ..measurement import CollectiveMeasurementSpec, ShadowData, run_learning
from ..oracles import exact_linear_expectation
from ..otoc import OtocTask, exact_otoc, otoc_estimate
from ..rng import stream
from . import experiments as X
from .config import ConfigError, ExperimentConfig, load_config
from .validate import run_suite

log = logging.getLogger("cseu")

SCAN_COLUMNS = ("schema_version",) + tuple(f.name for f in fields(X.ScanPoint)) + ("bound_pass",)
CALIBRATION_COLUMNS = ("schema_version", "kind", "instance", "B", "lam", "q_or_m", "var_empirical", "bound_C1", "ratio")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in r])
    path.write_text(buf.getvalue(), newline="")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(type(v))


def _unitary(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    return X.make_unitary(cfg.unitary, cfg.d, stream(seed, "unitary", 0))


def _label(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.unitary}:n={cfg.n}:seed={seed}"


def _tasks(cfg: ExperimentConfig, seed: int):
    rng = stream(seed, "tasks", 0)
    out = []
    for i, t in enumerate(cfg.tasks):
        for k in range(t.count):
            label = f"{t.observable_style}[B={t.B},{t.state_source},lam={t.lam}]#{i}.{k}"
            out.append(X.make_task(t.observable_style, t.B, t.state_source, t.lam, cfg.d, rng, label))
    return out


def _otoc_tasks(cfg: ExperimentConfig, seed: int):
    rng = stream(seed, "tasks", 1)
    out = []
    for i, spec in enumerate(cfg.otoc):
        for k in range(spec.count):
            if spec.W == "random" or spec.V == "random":
                w, v = X.anticommuting_paulis(cfg.n, rng)
            else:
                w, v = spec.W, spec.V
            if len(w) != cfg.n or len(v) != cfg.n:
                raise ConfigError(f"Pauli labels {w!r}, {v!r} need length n={cfg.n}")
            out.append(OtocTask(clifford.pauli_string(w), clifford.pauli_string(v), label=f"{w}/{v}#{i}.{k}"))
    return out


def _shadow(cfg: ExperimentConfig, seed: int, u: np.ndarray) -> ShadowData:
    if cfg.shadow_file:
        sd = ShadowData.load(cfg.shadow_file)
        if sd.d != cfg.d:
            raise ConfigError(f"shadow file has d={sd.d}, config has d={cfg.d}")
        return sd
    spec = CollectiveMeasurementSpec(cfg.s, cfg.mode)
    return run_learning(u, spec, cfg.m, seed, _label(cfg, seed), threads=cfg.threads)


def _truth_unitary(cfg: ExperimentConfig, sd: ShadowData, seed: int) -> np.ndarray | None:
    """Regenerate the unitary a shadow file was learned from, if its label says how."""
    if not cfg.shadow_file:
        return _unitary(cfg, seed)
    parts = dict(p.split("=", 1) for p in sd.unitary_label.split(":")[1:] if "=" in p)
    kind = sd.unitary_label.split(":", 1)[0]
    if kind != cfg.unitary or "seed" not in parts:
        return None
    return _unitary(cfg, int(parts["seed"]))


def cmd_learn(cfg, seed, out: Path) -> int:
    u = _unitary(cfg, seed)
    sd = _shadow(cfg, seed, u)
    sd.save(out / "shadow.bin")
    _write_json(out / "learn.json", {"header": sd.header(), "config": cfg.to_dict()})
    log.info("wrote %d snapshots to %s", sd.m, out / "shadow.bin")
    return 0


def cmd_predict(cfg, seed, out: Path) -> int:
    u = _unitary(cfg, seed)
    sd = _shadow(cfg, seed, u)
    tasks = _tasks(cfg, seed)
    reports = predict_many(sd, tasks, EstimatorParams(R=cfg.R))
    reports += [direct_mean_estimate(sd, t) for t in tasks]
    uu = _truth_unitary(cfg, sd, seed)
    if uu is not None:
        for r, t in zip(reports, tasks + tasks):
            r.truth = exact_linear_expectation(uu, t)
    _write_json(out / "predict.json", [r.to_dict() for r in reports])
    (out / "predict.csv").write_text(reports_to_csv(reports), newline="")
    for r in reports:
        log.info("%s %s estimate=%.6g truth=%s", r.estimator, r.task, r.estimate, r.truth)
    return 0 if all(r.bound_pass is not False for r in reports) else 1


def cmd_otoc(cfg, seed, out: Path) -> int:
    u = _unitary(cfg, seed)
    sd = _shadow(cfg, seed, u)
    reports = []
    for k, t in enumerate(_otoc_tasks(cfg, seed)):
        r = otoc_estimate(sd, t)
        uu = _truth_unitary(cfg, sd, seed)
        if uu is not None:
            r.truth = exact_otoc(uu, t)
        if cfg.repeats > 1:
            vals = X.otoc_samples(u, t, CollectiveMeasurementSpec(cfg.s, cfg.mode), sd.m, cfg.repeats, seed + 1 + k, cfg.threads)
            r.empirical_variance = float(np.var(vals, ddof=1))
        reports.append(r)
    _write_json(out / "otoc.json", [r.to_dict() for r in reports])
    (out / "otoc.csv").write_text(reports_to_csv(reports), newline="")
    return 0 if all(r.bound_pass is not False for r in reports) else 1


def cmd_validate(cfg, seed, out: Path) -> int:
    results = run_suite(cfg.d, seed, cfg.thresholds.se, cfg.thresholds.ks_p, log=print)
    _write_json(out / "validate.json", [asdict(r) for r in results])
    ok = all(r.passed for r in results)
    print(f"validate: {sum(r.passed for r in results)}/{len(results)} checks passed")
    return 0 if ok else 1


def cmd_scan(cfg, seed, out: Path) -> int:
    sc = cfg.scan
    grid = [
        (2**n, s, q, float(B), lam)
        for n in sc.n_list
        for s in sc.s_list
        for q in sc.q_list
        for B in sc.B_list
        for lam in sc.lam_list
        if B <= 2**n and lam <= 2**n and q >= 2
    ]
    if not grid:
        raise ConfigError("scan grid is empty")
    pts = X.scan_grid(grid, sc.observable_style, sc.batches, seed, sc.epsilon, sc.delta, sc.M, cfg.threads)
    rows = [(SCHEMA_VERSION,) + tuple(asdict(p).values()) + (bool(p.ratio <= 1.0),) for p in pts]
    _write_csv(out / "scan.csv", SCAN_COLUMNS, rows)
    npass = sum(r[-1] for r in rows)
    log.info("scan: %d/%d points within the calibrated bound", npass, len(rows))
    return 0 if npass == len(rows) else 1


def cmd_calibrate(cfg, seed, out: Path) -> int:
    res = X.calibrate(seed=seed, batches=cfg.calibration_batches, threads=cfg.threads)
    comment = f"calibrated at d=2 s=1, seed={seed}, batches={cfg.calibration_batches}"
    constants.write(res["constants"], out / "constants.txt", comment)
    if cfg.write_constants:
        constants.write(res["constants"], cfg.write_constants, comment)
    rows = [(SCHEMA_VERSION, r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]) for r in res["variance_rows"]]
    rows += [(SCHEMA_VERSION, r[0], r[1], None, None, r[2], r[3], r[4], r[5]) for r in res["otoc_rows"]]
    _write_csv(out / "calibration.csv", CALIBRATION_COLUMNS, rows)
    _write_json(out / "calibration.json", {"constants": res["constants"], "seed": seed, "batches": res["batches"]})
    for k, v in res["constants"].items():
        print(f"{k} = {v!r}")
    return 0


COMMANDS = {
    "learn": cmd_learn,
    "predict": cmd_predict,
    "otoc": cmd_otoc,
    "validate": cmd_validate,
    "scan": cmd_scan,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cseu-sim", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--threads", type=int, help="worker threads (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, output=args.out, threads=args.threads)
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, cfg.seed, out)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"cseu-sim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

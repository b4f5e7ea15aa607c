"""Command-line front end: simulate, sysid, analyze, sweep, calibrate.

Exit codes: 0 success, 1 runtime failure (timeouts, violated scenario
invariants, I/O), 2 invalid input (config, flags, data files).
Every command writes its files under ``--out`` plus a ``*_report.json``
listing each produced file with its sha256.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pydantic
import yaml

from . import __version__
from .config import SCENARIOS, ToolConfig, build_scenario, config_hash, load_config
from .control import calibrate_threshold
from .exceptions import InvalidInputError, SoftGripError
from .experiments import (
    run_asymmetric_grasp,
    run_free_tracking,
    run_grasp,
    run_pullout,
    sweep_contact_force,
    sweep_pullout,
)
from .lti import (
    ReferenceKind,
    TransferFunction,
    closed_loop_poles,
    critical_gain,
    is_stable,
    root_locus,
    steady_state_error,
)
from .lti import simulate as lti_simulate
from .sysid import fit_arx, prbs

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    """Bad flags or data files; maps to exit code 2."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class RunReport:
    command: str
    config_hash: str
    seed: int
    summary: dict = field(default_factory=dict)
    files: list[dict] = field(default_factory=list)

    def add_file(self, path: Path, out: Path) -> None:
        self.files.append({"path": path.relative_to(out).as_posix(), "sha256": _sha256(path), "bytes": path.stat().st_size})

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "summary": self.summary,
            "files": sorted(self.files, key=lambda f: f["path"]),
            "version": __version__,
        }

    def write(self, path: Path) -> None:
        path.write_text(_dumps(_jsonable(self.to_dict())), encoding="utf-8")


def _jsonable(v):
    """Plain JSON types; complex numbers become [re, im], non-finite floats strings."""
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return [_jsonable(float(v.real)), _jsonable(float(v.imag))]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


def _parse_floats(text: str, name: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"--{name}: no values given")
    if any(not math.isfinite(v) or v < 0 for v in vals):
        raise UsageError(f"--{name}: values must be finite and >= 0, got {text!r}")
    return vals


def _setup(args) -> tuple[ToolConfig, Path, int]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be >= 0")
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = Path(args.out if args.out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out, cfg.seed


def cmd_simulate(args) -> int:
    cfg, out, seed = _setup(args)
    mu = None
    if args.mu is not None:
        mu = _parse_floats(args.mu, "mu")
        mu = (mu[0], mu[0]) if len(mu) == 1 else mu
        if len(mu) != 2:
            raise UsageError("--mu takes one value or two comma-separated values")
    name = args.scenario
    sc = build_scenario(cfg, name, mu=mu)
    if name == "free_tracking":
        log, corpus = run_free_tracking(sc)
        p = cfg.detection.percentile
        summary = {
            "max_abs_error": {f"finger{i}": float(c.max()) for i, c in corpus.items()},
            "threshold": {f"finger{i}": calibrate_threshold(c, p) for i, c in corpus.items()},
            "percentile": p,
        }
    elif name == "asymmetric":
        log = run_asymmetric_grasp(sc)
        summary = dict(log.meta)
    elif name == "pullout":
        log, _ = run_pullout(sc)
        summary = dict(log.meta)
    else:
        log = run_grasp(sc)
        summary = dict(log.meta)
    report = RunReport("simulate", config_hash(cfg), seed, {"scenario": name, "mu": list(sc.mu), **summary})
    csv_path = out / f"{name}.csv"
    log.to_csv(csv_path)
    report.add_file(csv_path, out)
    report.write(out / f"{name}_report.json")
    print(f"{name}: {len(log)} steps -> {csv_path}")
    return EXIT_OK


def _read_tdy(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None
    if not text.strip():
        raise UsageError(f"{path}: file is empty")
    reader = csv.reader(text.splitlines())
    header = [h.strip() for h in next(reader)]
    for col in ("t", "d", "y"):
        if col not in header:
            raise UsageError(f"{path}: missing column '{col}'")
    idx = [header.index(c) for c in ("t", "d", "y")]
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise UsageError(f"{path}: line {line_no}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(row[j]) for j in idx]
        except ValueError:
            raise UsageError(f"{path}: line {line_no}: non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise UsageError(f"{path}: line {line_no}: non-finite value")
        if rows and vals[0] <= rows[-1][0]:
            raise UsageError(f"{path}: line {line_no}: time column must increase")
        rows.append(vals)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    a = np.asarray(rows)
    return a[:, 0], a[:, 1], a[:, 2]


def cmd_sysid(args) -> int:
    cfg, out, seed = _setup(args)
    T = args.sample_time if args.sample_time is not None else cfg.plant.sample_time
    report = RunReport("sysid", config_hash(cfg), seed)
    if args.input is not None:
        t, d, y = _read_tdy(Path(args.input))
        source = {"input": str(args.input)}
    else:
        levels = _parse_floats(args.levels, "levels")
        u = prbs(levels, args.length, seed=seed, sample_time=T).samples
        y = lti_simulate(replace_sample_time(cfg.plant.transfer_function(), T), u)
        if args.noise > 0:
            y = y + np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0]).normal(0.0, args.noise, y.size)
        t = np.arange(u.size) * T
        d = u
        data_path = out / "sysid_data.csv"
        with data_path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "d", "y"))
            for row in zip(t, d, y):
                w.writerow([format(float(v), ".10g") for v in row])
        report.add_file(data_path, out)
        source = {"synthetic": True, "levels": list(levels), "length": args.length, "noise": args.noise}
    est = fit_arx(d, y, sample_time=T)
    result = {**est.to_dict(), "n_samples": int(d.size), **source}
    est_path = out / "sysid.json"
    est_path.write_text(_dumps(_jsonable(result)), encoding="utf-8")
    report.add_file(est_path, out)
    report.summary = result
    report.write(out / "sysid_report.json")
    print(f"a1={est.a1:.6g} a2={est.a2:.6g} b1={est.b1:.6g} b2={est.b2:.6g} fit={est.fit_percent:.2f}%")
    return EXIT_OK


def replace_sample_time(tf: TransferFunction, T: float) -> TransferFunction:
    return TransferFunction(tf.num.coeffs, tf.den.coeffs, T)


def _fvt(controller, plant, kind) -> float | str:
    try:
        return steady_state_error(controller, plant, kind, 1.0)
    except SoftGripError:
        return "unstable"


def analysis(cfg: ToolConfig, gains=None) -> dict:
    """Poles, zeros, stability, steady-state errors and the force-loop root locus."""
    G = cfg.plant.transfer_function()
    T = G.sample_time
    tr, fo = cfg.tracking, cfg.force
    D_t = TransferFunction([tr.K_t, -tr.K_t * tr.z_t], [1.0, -2.0, 1.0], T)
    D_f = TransferFunction([fo.K_f, -fo.K_f * fo.z_f], [1.0, -1.0], T)
    shape = TransferFunction([1.0, -fo.z_f], [1.0, -1.0], T) * G
    gains = np.logspace(-3, 3, 61) if gains is None else np.asarray(gains, dtype=float)
    locus = root_locus(shape, gains)
    k_unstable = locus.first_unstable_gain()
    k_crit = None
    if k_unstable is not None:
        stable_gains = [g for g in gains if g < k_unstable]
        if stable_gains:
            k_crit = critical_gain(shape, stable_gains[-1], k_unstable)
    loops = {}
    for name, D in (("tracking", D_t), ("force", D_f)):
        L = D * G
        cl = closed_loop_poles(D, G)
        loops[name] = {
            "controller": D.to_dict(),
            "loop_poles": L.poles(),
            "loop_zeros": L.zeros(),
            "closed_loop_poles": cl,
            "max_pole_modulus": float(np.max(np.abs(cl))),
            "stable": is_stable(cl),
            "steady_state_error": {"step": _fvt(D, G, ReferenceKind.STEP), "ramp": _fvt(D, G, ReferenceKind.RAMP)},
        }
    return {
        "plant": {"transfer_function": G.to_dict(), "poles": G.poles(), "zeros": G.zeros(), "dc_gain": G.dc_gain()},
        "loops": loops,
        "verdict": "stable" if loops["force"]["stable"] else "unstable",
        "root_locus": {
            "loop": "K (z - z_f)/(z - 1) G(z)",
            "gains": locus.gains,
            "poles": locus.poles,
            "branches": locus.n_branches,
            "critical_gain": k_crit,
        },
    }


def cmd_analyze(args) -> int:
    cfg, out, seed = _setup(args)
    rep = analysis(cfg)
    path = out / "analysis.json"
    path.write_text(_dumps(_jsonable(rep)), encoding="utf-8")
    report = RunReport("analyze", config_hash(cfg), seed, {"verdict": rep["verdict"], "critical_gain": rep["root_locus"]["critical_gain"]})
    report.add_file(path, out)
    report.write(out / "analysis_report.json")
    print(f"force loop {rep['verdict']} at K_f={cfg.force.K_f}; critical gain {rep['root_locus']['critical_gain']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, out, seed = _setup(args)
    grid = _parse_floats(args.mu, "mu") if args.mu is not None else cfg.scenario.mu_grid
    trials = args.trials if args.trials is not None else cfg.scenario.trials
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    trial_dir = out / f"sweep_{args.kind}_trials"
    trial_dir.mkdir(exist_ok=True)
    report = RunReport("sweep", config_hash(cfg), seed)

    def on_trial(mu, trial_seed, log):
        p = trial_dir / f"mu{mu:g}_seed{trial_seed}.csv"
        log.to_csv(p)
        report.add_file(p, out)

    if args.kind == "contact":
        res = sweep_contact_force(build_scenario(cfg, "single_finger"), grid, trials, on_trial=on_trial)
    else:
        res = sweep_pullout(build_scenario(cfg, "pullout"), grid, trials, on_trial=on_trial)
    res.metadata["config_hash"] = report.config_hash
    path = out / f"sweep_{args.kind}.json"
    path.write_text(_dumps(_jsonable(res.to_dict())), encoding="utf-8")
    report.add_file(path, out)
    report.summary = {"kind": args.kind, "means": res.means(), "fit": res.fit}
    report.write(out / f"sweep_{args.kind}_report.json")
    print(f"sweep {args.kind}: {len(res.points)} points, fit {res.fit}")
    return EXIT_OK


def _read_errors(path: Path) -> dict[int, np.ndarray]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None
    if not text.strip():
        raise UsageError(f"{path}: file is empty")
    rows = list(csv.DictReader(text.splitlines()))
    if not rows:
        raise UsageError(f"{path}: no data rows")
    corpus = {}
    for i in (1, 2):
        for col in (f"e{i}", f"mode{i}"):
            if col not in rows[0]:
                raise UsageError(f"{path}: missing column '{col}'")
        vals = []
        for line_no, r in enumerate(rows, start=2):
            if r[f"mode{i}"] == "OFF":
                continue
            try:
                vals.append(abs(float(r[f"e{i}"])))
            except (TypeError, ValueError):
                raise UsageError(f"{path}: line {line_no}: non-numeric e{i}") from None
        if vals:
            corpus[i] = np.asarray(vals)
    return corpus


def cmd_calibrate(args) -> int:
    cfg, out, seed = _setup(args)
    p = args.percentile if args.percentile is not None else cfg.detection.percentile
    report = RunReport("calibrate", config_hash(cfg), seed)
    if args.input is not None:
        corpus = _read_errors(Path(args.input))
        source = str(args.input)
    else:
        log, corpus = run_free_tracking(build_scenario(cfg, "free_tracking"))
        log_path = out / "free_tracking.csv"
        log.to_csv(log_path)
        report.add_file(log_path, out)
        source = "free_tracking"
    try:
        thresholds = {f"finger{i}": calibrate_threshold(c, p) for i, c in corpus.items()}
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    result = {"percentile": p, "source": source, "e_tr": thresholds, "samples": {f"finger{i}": int(c.size) for i, c in corpus.items()}}
    path = out / "thresholds.json"
    path.write_text(_dumps(_jsonable(result)), encoding="utf-8")
    report.add_file(path, out)
    report.summary = result
    report.write(out / "calibrate_report.json")
    print(" ".join(f"{k}: e_tr={v:.4g}" for k, v in thresholds.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softgrip", description="Soft-gripper force modulation toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="nominal", help="YAML config path or 'nominal' (default)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")

    p = sub.add_parser("simulate", help="run one scenario, write its CSV log and a report")
    common(p)
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--mu", default=None, help="force factor(s): 'm' or 'm1,m2'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sysid", help="fit a 2nd-order ARX model to (t, d, y) data")
    common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", default=None, help="CSV with columns t, d, y")
    src.add_argument("--synthetic", action="store_true", help="generate PRBS data from the config plant (default)")
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--levels", default="30,60", help="PRBS duty levels, comma separated")
    p.add_argument("--noise", type=float, default=0.0, help="output noise std (deg) for synthetic data")
    p.add_argument("--sample-time", type=float, default=None)
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser("analyze", help="poles, zeros, stability, steady-state errors, root locus")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="contact-force or pull-out sweep over mu")
    common(p)
    p.add_argument("kind", choices=("contact", "pullout"))
    p.add_argument("--mu", default=None, help="mu grid, comma separated")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="contact thresholds from free-tracking errors")
    common(p)
    p.add_argument("--input", default=None, help="free-tracking CSV log (default: simulate one)")
    p.add_argument("--percentile", type=float, default=None)
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "length", 1) is not None and getattr(args, "length", 1) < 1:
        print("error: --length must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if getattr(args, "noise", 0.0) < 0:
        print("error: --noise must be >= 0", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except pydantic.ValidationError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except yaml.YAMLError as exc:
        print(f"error: config is not valid YAML: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, InvalidInputError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SoftGripError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

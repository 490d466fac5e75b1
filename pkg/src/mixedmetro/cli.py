"""Command-line front end: ``mixedmetro analytic|experiment|sweep|calibrate``.

Every command writes a ``manifest.json`` holding the resolved config
snapshot; ``mixedmetro <cmd> --snapshot manifest.json`` replays it.
"""

import argparse
import csv
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analytic, config, estimation, experiment, gate
from .config import SCHEMA_VERSION, ConfigError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

DATASET_COLUMNS = [
    "delta_omega_over_omega0", "sigma_z_mean", "sigma_z_expect", "n0", "n1", "losses", "leakage", "seed",
]
FRINGE_COLUMNS = [
    "t_s", "omega_t", "p0", "p1", "sigma_z", "fisher_full", "fisher_control", "sensitivity_full",
    "poisson_sigma_z",
]


# ---------------------------------------------------------------- output


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _manifest(out, command, flat, args, outputs, started, extra=None):
    m = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "config_path": args.config,
        "config": config.snapshot(flat),
        "seed": flat["experiment.seed"],
        "outputs": sorted(str(p) for p in outputs),
        "wall_clock_s": round(time.time() - started, 3),
    }
    m.update(extra or {})
    _write_json(Path(out) / "manifest.json", m)


# ---------------------------------------------------------------- analytic


def _safe(fn):
    try:
        v = float(fn())
    except analytic.DegenerateDistribution:
        return math.nan
    return v


def analytic_tables(flat, p_r):
    """Fringe rows over the ``t`` grid and the outcome table at ``analytic.t_s``."""
    n_r, p_c = flat["analytic.n_r"], flat["analytic.p_c"]
    omega = config.TWO_PI * flat["analytic.omega_hz"]
    n_t = flat["analytic.t_points"]
    if n_t < 1:
        raise ConfigError("analytic t grid is empty")
    t_grid = np.linspace(flat["analytic.t_min_s"], flat["analytic.t_max_s"], n_t)
    mean_n = flat["analytic.poisson_mean"]
    noise = analytic.NoiseParams(p_c, p_r)
    rows = []
    for t in t_grid:
        p0, p1 = analytic.control_marginals(analytic.ProtocolConfig(n_r, omega, float(t)), noise)
        ff = _safe(lambda: analytic.full_fisher(n_r, p_c, p_r, omega, t)) if t > 0 else 0.0
        fc = analytic.control_fisher(n_r, p_c, p_r, omega, t) if t > 0 else 0.0
        rows.append({
            "t_s": float(t), "omega_t": float(omega * t), "p0": float(p0), "p1": float(p1),
            "sigma_z": float(p0 - p1), "fisher_full": ff, "fisher_control": float(fc),
            "sensitivity_full": (1.0 / (omega * math.sqrt(ff))) if ff and ff > 0 else math.inf,
            "poisson_sigma_z": float(analytic.poisson_sigma_z(mean_n, omega * t, p_c, p_r)) if mean_n > 0 else "",
        })
    t0 = flat["analytic.t_s"]
    table = analytic.outcome_table(n_r, p_c, p_r, omega * t0)
    probs = [{"k": k, "n": n, "p": float(table[k, n])} for k in range(2) for n in range(n_r + 1)]
    f_closed = analytic.fisher_closed_form(n_r, p_r, t0)
    summary = {
        "n_r": n_r, "p_c": p_c, "p_r": p_r, "omega": omega, "t_s": t0,
        "fisher_closed_form": f_closed,
        "sensitivity_closed_form": analytic.sensitivity(f_closed, 1, omega),
    }
    if mean_n > 0:
        f_best, phase = analytic.best_control_fisher(mean_n, p_c, p_r)
        summary.update(poisson_mean=mean_n, best_control_fisher_per_t2=f_best, best_phase=phase)
    return rows, probs, summary


def cmd_analytic(args, flat, out, started):
    outputs = []
    summaries = []
    for p_r in flat["analytic.p_r"]:
        tag = f"pr{p_r:g}"
        rows, probs, summary = analytic_tables(flat, p_r)
        for name, cols, data in (("fringe", FRINGE_COLUMNS, rows), ("probs", ["k", "n", "p"], probs)):
            p = out / f"{name}_{tag}.csv"
            _write_csv(p, cols, data)
            outputs.append(p)
        summaries.append(summary)
    p = out / "summary.json"
    _write_json(p, {"schema_version": SCHEMA_VERSION, "results": summaries})
    outputs.append(p)
    _manifest(out, "analytic", flat, args, outputs, started)
    return EXIT_OK


# ------------------------------------------------------------ experiment


def build_gate_model(cfg, flat):
    kind = cfg.large_n.gate_model
    if kind == "perfect":
        return experiment.GateContrastModel()
    if kind == "curve":
        sub = replace(cfg, nu=cfg.large_n.curve_nu)
        return experiment.gate_contrast_curve(cfg.large_n.curve_max_n, flat["large_n.curve_linewidth_hz"], sub)
    recs = experiment.sampled_gate_thetas(cfg, cfg.large_n.curve_nu)
    return experiment.GateContrastModel("records", thetas=tuple(float(r.theta) for r in recs))


def run_experiment(flat):
    """Run one configured experiment; returns ``(dataset rows, report, error)``.

    ``error`` is set when the dataset exists but its analysis failed.
    """
    cfg = config.experiment_config(flat)
    report = {"mode": cfg.mode}
    if cfg.mode == "full_dynamics":
        data = experiment.run_full_protocol(cfg)
        model = flat["experiment.fit_model"] or "cosine"
        n_eff = cfg.mean_n_r
    else:
        gates = build_gate_model(cfg, flat)
        report["gate_model"] = {
            "kind": gates.kind, "amplitude": gates.amplitude, "decay": gates.decay,
            "n_values": list(gates.n_values), "contrasts": list(gates.contrasts),
            "extrapolated_contrast": float(gates.contrast(cfg.mean_n_r, cfg.noise.p_C)),
            "n_thetas": len(gates.thetas),
        }
        data = experiment.run_large_n(cfg, gates)
        model = flat["experiment.fit_model"] or "poisson-envelope"
        n_eff = cfg.mean_n_r
    rows = [
        {"delta_omega_over_omega0": p.delta, "sigma_z_mean": p.sigma_z_mean, "sigma_z_expect": p.sigma_z_expect,
         "n0": p.n0, "n1": p.n1, "losses": p.losses, "leakage": p.leakage, "seed": cfg.seed}
        for p in data.points
    ]
    column = flat["experiment.fit_column"] or "sigma_z_mean"
    try:
        fit = estimation.fit_fringe(data, model, column=column, n_eff=n_eff)
        report["fit"] = {
            "model": model, "column": column, "contrast": fit.contrast, "contrast_stderr": fit.contrast_stderr,
            "phase_offset": fit.phase_offset, "baseline": fit.baseline, "residual_rms": fit.residual,
            "uncertain": fit.uncertain, "center_omega": fit.center,
        }
        if cfg.mode == "large_n_model":
            op = estimation.operating_point(fit.model, cfg.omega0)
            rep = estimation.sensitivity_report(op.fisher, cfg.omega0, cfg.t, cfg.mean_n_r)
            report["sensitivity"] = {
                "S_Q": rep.S_Q, "S_C": rep.S_C, "ratio": rep.ratio, "fisher": rep.fisher,
                "omega": rep.omega, "operating_offset": op.offset, "nu_convention": rep.nu_convention,
            }
    except (estimation.FitError, estimation.NoInformativePoint) as exc:
        return rows, report, str(exc)
    return rows, report, None


def cmd_experiment(args, flat, out, started):
    rows, report, err = run_experiment(flat)
    ds = out / "dataset.csv"
    _write_csv(ds, DATASET_COLUMNS, rows)
    rp = out / "report.json"
    report["schema_version"] = SCHEMA_VERSION
    if err:
        report["error"] = err
        report["partial"] = True
    _write_json(rp, report)
    _manifest(out, "experiment", flat, args, [ds, rp], started, {"partial": bool(err)})
    if err:
        print(f"analysis failed, dataset kept: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ------------------------------------------------------------------ sweep


def _cell_worker(item):
    index, overrides, snap = item
    flat = config.with_overrides(config.from_snapshot(snap), overrides)
    try:
        rows, report, err = run_experiment(flat)
    except ConfigError as exc:
        return index, [], {}, f"validation: {exc}"
    except Exception as exc:  # noqa: BLE001 - recorded per cell, sweep continues
        return index, [], {}, f"{type(exc).__name__}: {exc}"
    return index, rows, report, err


def _cell_key(overrides, snap):
    blob = json.dumps([overrides, snap], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cmd_sweep(args, flat, out, started):
    axes = config.sweep_axes(flat)
    if not axes:
        raise ConfigError("sweep needs at least one axis in sweep.axes")
    grid = list(itertools.product(*[[(k, v) for v in vals] for k, vals in axes]))
    if len(grid) > flat["sweep.max_cells"]:
        raise ConfigError(f"sweep has {len(grid)} cells, limit sweep.max_cells = {flat['sweep.max_cells']}")
    base = {k: v for k, v in config.snapshot(flat).items() if k != "sweep.axes"}
    for cell in grid:  # validate every cell before spending compute
        config.experiment_config(config.with_overrides(flat, cell))
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    todo = []
    for i, cell in enumerate(grid):
        ck = cells_dir / f"cell_{i:04d}.json"
        key = _cell_key(cell, base)
        if ck.exists() and json.loads(ck.read_text()).get("key") == key:
            continue
        todo.append((i, list(cell), base))
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            _store_cells(pool.map(_cell_worker, todo), grid, base, cells_dir)
    else:
        _store_cells(map(_cell_worker, todo), grid, base, cells_dir)

    axis_keys = [k for k, _ in axes]
    columns = ["cell"] + axis_keys + DATASET_COLUMNS + ["contrast", "status"]
    rows, failed, reports = [], 0, []
    for i, cell in enumerate(grid):
        ck = json.loads((cells_dir / f"cell_{i:04d}.json").read_text())
        status = ck["status"]
        failed += status != "ok"
        contrast = ck.get("report", {}).get("fit", {}).get("contrast", "")
        base_row = {"cell": i, **dict(cell), "contrast": contrast, "status": status}
        reports.append({"cell": i, "overrides": dict(cell), "status": status, "report": ck.get("report", {})})
        if not ck["rows"]:
            rows.append(base_row)
        for r in ck["rows"]:
            rows.append({**r, **base_row})
    agg = out / "sweep.csv"
    _write_csv(agg, columns, rows)
    rp = out / "sweep_report.json"
    _write_json(rp, {"schema_version": SCHEMA_VERSION, "cells": reports})
    _manifest(out, "sweep", flat, args, [agg, rp], started,
              {"cells": len(grid), "failed_cells": failed, "partial": failed > 0})
    return EXIT_PARTIAL if failed else EXIT_OK


def _store_cells(results, grid, base, cells_dir):
    for index, rows, report, err in results:
        status = "ok" if err is None else f"error: {err}"
        obj = {"key": _cell_key(list(grid[index]), base), "status": status, "rows": rows, "report": report}
        _write_json(cells_dir / f"cell_{index:04d}.json", obj)


# -------------------------------------------------------------- calibrate


def cmd_calibrate(args, flat, out, started):
    cfg = config.experiment_config(flat)
    pulses = replace(cfg.gate.pulses(), amplitude_scale=1.0)
    cal = gate.calibrate_amplitude_scale(pulses, n_steps=cfg.gate.steps)
    p = out / "calibration.json"
    _write_json(p, {
        "schema_version": SCHEMA_VERSION,
        "amplitude_scale": cal.amplitude_scale,
        "blocked_transfer": cal.blocked_transfer,
        "eit_transfer": cal.eit_transfer,
    })
    outputs = [p]
    if args.write_config:
        import configparser

        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read(args.write_config)
        if not cp.has_section("gate"):
            cp.add_section("gate")
        cp.set("gate", "amplitude_scale", repr(cal.amplitude_scale))
        with open(args.write_config, "w") as fh:
            cp.write(fh)
        outputs.append(Path(args.write_config))
    _manifest(out, "calibrate", flat, args, outputs, started)
    print(f"amplitude_scale = {cal.amplitude_scale:.7f} (blocked transfer {cal.blocked_transfer:.4f},"
          f" EIT transfer {cal.eit_transfer:.2e})")
    return EXIT_OK


COMMANDS = {"analytic": cmd_analytic, "experiment": cmd_experiment, "sweep": cmd_sweep,
            "calibrate": cmd_calibrate}


def build_parser():
    ap = argparse.ArgumentParser(prog="mixedmetro", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"mixedmetro {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--snapshot", help="manifest.json of an earlier run to replay")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path override, e.g. experiment.nu=49 (repeatable)")
        p.add_argument("--ninf", action="store_true", help="report probabilities instead of sampled tallies")
        if name == "calibrate":
            p.add_argument("--write-config", help="store the calibrated amplitude_scale in this INI file")
    return ap


def resolve(args):
    if args.snapshot:
        snap = json.loads(Path(args.snapshot).read_text())["config"]
        flat = config.from_snapshot(snap)
        flat = config.with_overrides(flat, [tuple(s.split("=", 1)) for s in args.set if "=" in s])
    else:
        flat = config.load(args.config, args.set)
    if args.seed is not None:
        flat["experiment.seed"] = args.seed
    if args.ninf:
        flat["experiment.ninf"] = True
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return flat


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        flat = resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, flat, out, started)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        if os.environ.get("MIXEDMETRO_TRACEBACK"):
            raise
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner: ``amolab <kind> [--config PATH] [--out DIR] ...``.

Exit codes: 0 when every check passes, 2 when a verification fails, 1 on
any error (with a JSON object on stderr).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from .errors import AmolabError, InvalidArgument
from .experiments import (KINDS, PIPELINES, SWEEP_HEADER, ExperimentConfig, Outcome, sweep_cell,
                          versions)

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def fmt(v) -> str:
    """CSV cell: floats with 17 significant digits, bools lowercase."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    return str(o)


def _clean(o):
    # NaN/inf are not valid JSON; emit null
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(float(o)):
        return None
    return o


def write_json(path, obj):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, default=_json_default)
        fh.write("\n")


def write_manifest(out: Path, cfg: ExperimentConfig, fitted: dict, elapsed: float, verdict):
    tol = {k: getattr(cfg, k) for k in ("epsilon", "density_epsilon", "sc_epsilon", "threshold", "C", "C0",
                                        "C_max", "transport_threshold", "precision_bits")}
    fit = {"K_hat_est": None, "delta_hat": None, "onset_K": cfg.onset}
    fit.update(fitted)
    write_json(out / "manifest.json", {"config": cfg.to_dict(), "tolerances": tol, "fitted": fit,
                                       "versions": versions(), "elapsed_seconds": elapsed,
                                       "verdict": None if verdict is None else ("pass" if verdict else "fail")})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amolab", description="Strong-coupling almost Mathieu experiments.")
    sub = ap.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        p = sub.add_parser(k, help=f"run the {k} experiment")
        p.add_argument("--config", type=Path, help="flat key = value file (INI style)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default out/<kind>)")
        p.add_argument("--seed", type=int)
        p.add_argument("--precision-bits", type=int, dest="precision_bits")
        p.add_argument("--threads", type=int)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
    return ap


def resolve_config(args) -> ExperimentConfig:
    over = {"kind": args.kind}
    for kv in args.set:
        if "=" not in kv:
            raise InvalidArgument(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        over[k.strip()] = v.strip()
    for k in ("seed", "precision_bits", "threads"):
        if getattr(args, k) is not None:
            over[k] = getattr(args, k)
    if args.config is not None:
        cfg = ExperimentConfig.from_ini(args.config, over)
    else:
        cfg = ExperimentConfig.from_mapping(over)
    return cfg.validate()


def _cell_path(parts: Path, i: int, j: int) -> Path:
    return parts / f"cell_{i:03d}_{j:03d}.csv"


def _run_cell(cfg_dict, i, j, L, d):
    return i, j, sweep_cell(ExperimentConfig.from_mapping(cfg_dict), L, d)


def run_sweep(cfg: ExperimentConfig, out: Path) -> Outcome:
    """Grid over ``sweep_ln_lambda x sweep_delta``; completed cells are reused on rerun."""
    grid = [(i, j, L, d) for i, L in enumerate(cfg.sweep_ln_lambda) for j, d in enumerate(cfg.sweep_delta)]
    if not grid:
        raise InvalidArgument("empty sweep grid")
    parts = out / "sweep_parts"
    parts.mkdir(parents=True, exist_ok=True)
    todo = [g for g in grid if not _cell_path(parts, g[0], g[1]).exists()]

    def save(i, j, row):
        # single writer: only the parent process touches the filesystem
        tmp = _cell_path(parts, i, j).with_suffix(".tmp")
        write_csv(tmp, SWEEP_HEADER, [row])
        os.replace(tmp, _cell_path(parts, i, j))

    cd = cfg.to_dict()
    if cfg.threads > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            futs = [ex.submit(_run_cell, cd, *g) for g in todo]
            for f in as_completed(futs):
                save(*f.result())
    else:
        for g in todo:
            save(*_run_cell(cd, *g))

    rows = []
    for i, j, _, _ in grid:
        with open(_cell_path(parts, i, j), newline="", encoding="utf-8") as fh:
            r = list(csv.reader(fh))
        rows.append(r[1])
    idx = {k: n for n, k in enumerate(SWEEP_HEADER)}
    match = all(r[idx["match"]] == "true" for r in rows)
    ok_status = all(r[idx["status"]] == "ok" for r in rows)
    rates = [float(r[idx["decay_pass_rate"]]) for r in rows
             if r[idx["classification"]] == "localized" and r[idx["decay_pass_rate"]] not in ("", "nan")]
    decay_ok = all(x >= 0.9 for x in rates)
    report = {"cells": len(rows), "reused": len(grid) - len(todo), "classification_match": match,
              "all_cells_ok": ok_status, "localized_decay_rates": rates, "localized_decay_ok": decay_ok,
              "pass": bool(match and ok_status and decay_ok)}
    # rows already formatted; pass through unchanged
    return Outcome(report, {"sweep": (SWEEP_HEADER, rows)}, report["pass"], {})


def run_experiment(cfg: ExperimentConfig, out: Path) -> int:
    """Run one experiment, write all artifacts into ``out`` and return the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    outcome = run_sweep(cfg, out) if cfg.kind == "sweep" else PIPELINES[cfg.kind](cfg)
    elapsed = time.perf_counter() - t0
    report = dict(outcome.report)
    jsonl = report.pop("jsonl", None)
    for name, (header, rows) in outcome.tables.items():
        write_csv(out / f"{name}.csv", header, rows)
    if jsonl is not None:
        with open(out / "verdicts.jsonl", "w", newline="\n", encoding="utf-8") as fh:
            fh.write(jsonl if jsonl.endswith("\n") or not jsonl else jsonl + "\n")
    report.setdefault("pass", outcome.verdict)
    write_json(out / "report.json", report)
    write_manifest(out, cfg, outcome.fitted, elapsed, outcome.verdict)
    status = "PASS" if outcome.verdict else "FAIL"
    print(f"{cfg.kind}: {status} ({elapsed:.1f}s) -> {out}")
    return EXIT_PASS if outcome.verdict else EXIT_FAIL


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = args.out if args.out is not None else Path("out") / cfg.kind
        return run_experiment(cfg, out)
    except Exception as e:
        err = {"error": type(e).__name__, "message": str(e), "kind": getattr(args, "kind", None),
               "domain": isinstance(e, AmolabError)}
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: gen, train, eval, sweep, report, lle.

Exit codes: 0 success, 2 usage error, 3 numerical divergence, 4 I/O or
file-format error. Every output file embeds the config hash and tool
version so results stay attributable.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import config as cfgmod
from . import curriculum as cur
from . import dynsys, metrics, nn, trainer
from .dataio import generate_dataset, load_dataset, prediction_length, save_dataset
from .errors import (DivergenceError, FormatError, InvalidInputError,
                     VersionError)

_WORKERS_ENV = "CHAOSCAST_WORKERS"


def _atomic_write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_config_arg(path) -> dict:
    return cfgmod.parse_kv_file(path) if path else {}


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    cfg = _load_config_arg(args.config)
    if args.system:
        cfg["system.name"] = args.system
    if args.samples is not None:
        cfg["system.samples"] = args.samples
    if args.seed is not None:
        cfg["system.seed"] = args.seed
    spec = cfgmod.system_from_config(cfg)
    if spec.name not in dynsys.CLI_SYSTEMS:
        raise InvalidInputError(
            f"unknown system {spec.name!r}; presets: {', '.join(dynsys.CLI_SYSTEMS)}")
    x0 = cfg.get("system.x0")
    if x0 is not None and not isinstance(x0, list):
        x0 = [x0]
    ds = generate_dataset(
        spec,
        n_samples=cfg.get("system.samples", 10000),
        seed=cfg.get("system.seed", 0),
        transient=cfg.get("system.transient", 1000),
        substeps=cfg.get("system.substeps", 10),
        x0=x0,
    )
    save_dataset(ds, args.out)
    sidecar = dict(ds.source)
    sidecar["steps"] = ds.steps
    sidecar["dt"] = ds.dt
    sidecar["lle"] = None if math.isnan(ds.lle) else ds.lle
    sidecar["config_hash"] = cfgmod.config_hash(cfg)
    sidecar["version"] = __version__
    _atomic_write_text(str(args.out) + ".json", _dump_json(sidecar))
    print(f"wrote {args.out} ({ds.steps} steps, d={ds.dim})")
    return 0


# ---------------------------------------------------------------------------
# train

def _train_once(cfg: dict, dataset_path, out_prefix, resume=None):
    ds = load_dataset(dataset_path)
    model_cfg = cfgmod.build_model_config(cfg)
    trainer_cfg = cfgmod.build_trainer_config(cfg)
    curriculum_cfg = cfgmod.build_curriculum_config(cfg)
    meta = {"config_hash": cfgmod.config_hash(cfg), "version": __version__,
            "dataset": os.path.basename(str(dataset_path))}
    log_path = f"{out_prefix}.log.jsonl"
    ckpt_path = f"{out_prefix}.ckpt"
    params, log = trainer.train(
        model_cfg, trainer_cfg, curriculum_cfg, ds,
        log_path=log_path, checkpoint_path=ckpt_path,
        resume_from=resume, meta=meta)
    return params, log, ckpt_path, log_path


def cmd_train(args) -> int:
    if not args.dataset:
        raise InvalidInputError("train needs --dataset PATH")
    if not os.path.exists(args.dataset):
        raise InvalidInputError(f"dataset file not found: {args.dataset}")
    cfg = cfgmod.parse_kv_file(args.config)
    _, log, ckpt_path, log_path = _train_once(
        cfg, args.dataset, args.out_prefix, resume=args.resume)
    print(f"stopped: {log.stop_reason} after {len(log.records)} epochs; "
          f"best val loss {log.best_val_loss:.6g} at epoch {log.best_epoch}")
    print(f"wrote {log_path} and {ckpt_path}")
    return 0


# ---------------------------------------------------------------------------
# eval

def _params_from_checkpoint(ckpt_path):
    state = trainer.checkpoint_resume(ckpt_path)
    skeleton = nn.init_params(state["cell_kind"], state["data_dim"],
                              state["hidden"], seed=0)
    return skeleton.with_vector(state["best_params"]), state


def cmd_eval(args) -> int:
    params, state = _params_from_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    if args.horizon_lt is not None and ds.has_lle:
        horizon = args.horizon_lt * prediction_length(ds.dt, ds.lle)
    else:
        horizon = args.horizon
    report = metrics.evaluate(params, ds, horizon_steps=horizon,
                              warmup=args.warmup, threshold=args.threshold)
    wrapper = {
        "report": report.to_dict(),
        "dataset": {"dt": ds.dt,
                    "lle": None if math.isnan(ds.lle) else ds.lle,
                    "source": ds.source},
        "config_hash": state.get("meta", {}).get("config_hash", ""),
        "version": __version__,
    }
    _atomic_write_text(args.out, _dump_json(wrapper))
    print(f"NRMSE over 1 LT: {report.nrmse_mean_1lt:.5f}  "
          f"last 10%: {report.nrmse_last10:.5f}  "
          f"#LT R2>0.9: {report.lt_r2_horizon:.2f}")
    return 0


# ---------------------------------------------------------------------------
# sweep

def _run_sweep_cell(task) -> tuple:
    """Execute one (strategy, length, seed) cell; returns (name, status)."""
    cfg, cell, dataset_path, cell_dir = task
    name = cfgmod.cell_name(cell)
    eval_path = os.path.join(cell_dir, "eval.json")
    if os.path.exists(eval_path):
        return name, "skipped"
    os.makedirs(cell_dir, exist_ok=True)
    ds = load_dataset(dataset_path)
    model_cfg = cfgmod.build_model_config(cfg)
    trainer_cfg = cfgmod.build_trainer_config(cfg, seed=cell["seed"])
    cell_kwargs = {k: v for k, v in cell.items() if k != "seed"}
    curriculum_cfg = cfgmod.build_curriculum_config(cfg, **cell_kwargs)
    meta = {"config_hash": cfgmod.config_hash(cfg), "version": __version__,
            "cell": name}
    prefix = os.path.join(cell_dir, "run")
    try:
        params, log = trainer.train(
            model_cfg, trainer_cfg, curriculum_cfg, ds,
            log_path=f"{prefix}.log.jsonl", checkpoint_path=f"{prefix}.ckpt",
            meta=meta)
    except DivergenceError as exc:
        _atomic_write_text(os.path.join(cell_dir, "diverged.json"),
                           _dump_json({"error": str(exc)}))
        return name, "diverged"
    horizon_lt = cfg.get("sweep.eval_horizon_lt", 1)
    m = trainer_cfg.m if trainer_cfg.m is not None \
        else prediction_length(ds.dt, ds.lle)
    report = metrics.evaluate(params, ds, horizon_steps=horizon_lt * m,
                              warmup=trainer_cfg.n)
    wrapper = {
        "cell": cell,
        "strategy": cell["strategy"],
        "seed": cell["seed"],
        "epochs_trained": len(log.records),
        "best_epoch": log.best_epoch,
        "dataset": {"dt": ds.dt,
                    "lle": None if math.isnan(ds.lle) else ds.lle},
        "report": report.to_dict(),
        "config_hash": meta["config_hash"],
        "version": __version__,
    }
    _atomic_write_text(eval_path, _dump_json(wrapper))
    return name, "done"


def cmd_sweep(args) -> int:
    cfg = cfgmod.parse_kv_file(args.config)
    cells = cfgmod.sweep_cells(cfg, scale=args.scale)
    if not cells:
        raise InvalidInputError("sweep expanded to an empty cell list")
    os.makedirs(args.out_dir, exist_ok=True)
    ds_dir = os.path.join(args.out_dir, "datasets")
    os.makedirs(ds_dir, exist_ok=True)

    spec = cfgmod.system_from_config(cfg)
    seeds = sorted({c["seed"] for c in cells})
    dataset_paths = {}
    for seed in seeds:
        path = os.path.join(ds_dir, f"{spec.name}_s{seed}.ds")
        if not os.path.exists(path):
            ds = generate_dataset(
                spec, n_samples=cfg.get("system.samples", 10000), seed=seed,
                transient=cfg.get("system.transient", 1000),
                substeps=cfg.get("system.substeps", 10))
            save_dataset(ds, path)
        dataset_paths[seed] = path

    tasks = []
    for cell in cells:
        name = cfgmod.cell_name(cell)
        cell_dir = os.path.join(args.out_dir, "cells", name)
        tasks.append((cfg, cell, dataset_paths[cell["seed"]], cell_dir))

    workers = args.workers or int(os.environ.get(_WORKERS_ENV, 0)) \
        or (os.cpu_count() or 1)
    if workers <= 1:
        results = [_run_sweep_cell(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sweep_cell, tasks))
    for name, status in results:
        print(f"{name}: {status}")
    return 0


# ---------------------------------------------------------------------------
# report

_BASELINES = ("FR", "TF")


def _strategy_label(cell: dict) -> str:
    return cell["strategy"].replace("_", "-")


def _fmt_or_blank(value, fmt):
    return fmt.format(value) if value is not None else ""


def _collect_cells(sweep_dir):
    cells_dir = os.path.join(sweep_dir, "cells")
    if not os.path.isdir(cells_dir):
        raise InvalidInputError(f"{sweep_dir}: no cells/ directory to report on")
    rows = []
    for name in sorted(os.listdir(cells_dir)):
        eval_path = os.path.join(cells_dir, name, "eval.json")
        if not os.path.exists(eval_path):
            continue
        with open(eval_path, "r", encoding="utf-8") as fh:
            rows.append(json.load(fh))
    if not rows:
        raise InvalidInputError(f"{sweep_dir}: no completed cells found")
    return rows


def render_report(rows) -> tuple:
    """(markdown table, CSV text of R2-vs-LT curves) for a sweep."""
    by_strategy = {}
    for row in rows:
        by_strategy.setdefault(row["strategy"], []).append(row)
    best = {s: min(group, key=lambda r: r["report"]["nrmse_mean_1lt"])
            for s, group in by_strategy.items()}

    baseline_rows = [best[s] for s in _BASELINES if s in best]
    best_baseline = min(baseline_rows,
                        key=lambda r: r["report"]["nrmse_mean_1lt"]) \
        if baseline_rows else None

    header = ("| Strategy | C | L | Epochs | NRMSE (1LT) | rel. impr. | "
              "last 10% | #LT R2>0.9 | best BL |")
    sep = "|" + "---|" * 9
    lines = [f"<!-- chaoscast {__version__}, {len(rows)} cells -->",
             header, sep]
    order = [s for s in _BASELINES if s in best] + \
            sorted(s for s in best if s not in _BASELINES)
    for strategy in order:
        row = best[strategy]
        rep = row["report"]
        cell = row["cell"]
        is_baseline = strategy in _BASELINES
        rel = ""
        if not is_baseline and best_baseline is not None:
            rel = "{:+.2f}%".format(metrics.rel_improvement(
                best_baseline["report"]["nrmse_mean_1lt"],
                rep["nrmse_mean_1lt"]))
        lt = rep["lt_r2_horizon"]
        lines.append("| {} | {} | {} | {} | {:.5f} | {} | {:.5f} | {} | {} |".format(
            _strategy_label(cell),
            cell.get("transition", "constant"),
            cell.get("length", ""),
            row["epochs_trained"],
            rep["nrmse_mean_1lt"],
            rel,
            rep["nrmse_last10"],
            _fmt_or_blank(lt, "{:.2f}"),
            "*" if best_baseline is not None and row is best_baseline else "",
        ))
    md = "\n".join(lines) + "\n"

    csv_lines = [f"# chaoscast {__version__}", "strategy,step,lt,r2"]
    for strategy in order:
        row = best[strategy]
        rep = row["report"]
        dt = row["dataset"]["dt"]
        lle = row["dataset"]["lle"]
        for step, r2 in enumerate(rep["r2_curve"], start=1):
            lt_val = "" if lle is None else repr(step * dt * lle)
            csv_lines.append(f"{_strategy_label(row['cell'])},{step},{lt_val},{r2!r}")
    csv = "\n".join(csv_lines) + "\n"
    return md, csv


def cmd_report(args) -> int:
    rows = _collect_cells(args.sweep_dir)
    md, csv = render_report(rows)
    if args.out_md:
        _atomic_write_text(args.out_md, md)
    else:
        sys.stdout.write(md)
    if args.out_csv:
        _atomic_write_text(args.out_csv, csv)
    return 0


# ---------------------------------------------------------------------------
# lle

def cmd_lle(args) -> int:
    spec = dynsys.get_system(args.system)
    est = dynsys.estimate_lle(spec, renorm_interval=args.renorm,
                              total_steps=args.steps, substeps=args.substeps,
                              transient_steps=args.transient)
    line = f"{spec.name}: estimated LLE = {est:.4f}"
    if math.isfinite(spec.lle):
        dev = (est - spec.lle) / spec.lle * 100.0 if spec.lle != 0 else math.nan
        line += f" (published {spec.lle}, deviation {dev:+.1f}%)"
    print(line)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaoscast",
        description="Chaotic-system forecasting with teacher-forcing curricula")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset from a system preset")
    p.add_argument("--system", help="|".join(dynsys.CLI_SYSTEMS))
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value config with system.* overrides")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-prefix", default="run")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon-lt", type=int, default=None,
                   help="horizon as a multiple of the Lyapunov time")
    p.add_argument("--horizon", type=int, default=None,
                   help="horizon in steps (for datasets without an LLE)")
    p.add_argument("--warmup", type=int, default=150)
    p.add_argument("--threshold", type=float, default=0.9)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate a strategy grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scale", type=float, default=1.0,
                   help="scale factor applied to the curriculum-length grid")
    p.add_argument("--workers", type=int, default=0,
                   help=f"worker processes (default: ${_WORKERS_ENV} or cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate a sweep directory")
    p.add_argument("--sweep-dir", required=True)
    p.add_argument("--out-md")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("lle", help="estimate a largest Lyapunov exponent")
    p.add_argument("--system", required=True)
    p.add_argument("--steps", type=int, default=30000)
    p.add_argument("--renorm", type=int, default=10)
    p.add_argument("--substeps", type=int, default=5)
    p.add_argument("--transient", type=int, default=1000)
    p.set_defaults(func=cmd_lle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return 3
    except (VersionError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

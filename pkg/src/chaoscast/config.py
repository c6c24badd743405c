"""Flat dotted key=value experiment configs, presets, and hashing.

The format is intentionally plain: one ``section.key = value`` per line,
``#`` comments, values typed as int, float, bool, string, or a
comma-separated list. Unknown keys are rejected so typos surface at load
time. The canonical serialization (sorted keys) is what gets hashed into
every output file.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math

from . import curriculum as cur
from . import dynsys
from .errors import InvalidInputError
from .trainer import ModelConfig, TrainerConfig

__all__ = [
    "parse_kv",
    "parse_kv_file",
    "dump_kv",
    "config_hash",
    "build_model_config",
    "build_trainer_config",
    "build_curriculum_config",
    "system_from_config",
    "sweep_cells",
    "scale_lengths",
]

_KNOWN_PREFIXES = (
    "system.name", "system.samples", "system.seed", "system.transient",
    "system.substeps", "system.x0", "system.params.",
    "data.path", "data.dt", "data.lle", "data.columns",
    "model.cell", "model.hidden", "model.layers",
    "trainer.batch_size", "trainer.lr0", "trainer.plateau_patience",
    "trainer.lr_factor", "trainer.min_lr", "trainer.es_patience",
    "trainer.es_min_improvement", "trainer.max_epochs", "trainer.seed",
    "trainer.detach_feedback", "trainer.scheduler_enabled", "trainer.n",
    "trainer.m", "trainer.train_stride", "trainer.val_stride",
    "trainer.checkpoint_every",
    "curriculum.strategy", "curriculum.transition", "curriculum.eps_start",
    "curriculum.eps_end", "curriculum.length", "curriculum.k",
    "curriculum.epsilon", "curriculum.stf_tau",
    "eval.horizon_lt", "eval.warmup", "eval.threshold",
    "sweep.preset", "sweep.strategies", "sweep.lengths", "sweep.seeds",
    "sweep.transition", "sweep.eval_horizon_lt",
)


def _parse_scalar(tok: str):
    tok = tok.strip()
    low = tok.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_scalar(t) for t in raw.split(",")]
    return _parse_scalar(raw)


def _check_key(key: str, where: str):
    for prefix in _KNOWN_PREFIXES:
        if key == prefix or (prefix.endswith(".") and key.startswith(prefix)):
            return
    raise InvalidInputError(f"{where}: unknown config key {key!r}")


def parse_kv(text: str, where: str = "<config>") -> dict:
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InvalidInputError(
                f"{where}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        _check_key(key, f"{where}:{lineno}")
        cfg[key] = _parse_value(raw)
    return cfg


def parse_kv_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv(fh.read(), where=str(path))


def _fmt_value(v) -> str:
    if isinstance(v, list):
        return ",".join(_fmt_value(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_kv(cfg: dict) -> str:
    return "".join(f"{k} = {_fmt_value(cfg[k])}\n" for k in sorted(cfg))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dump_kv(cfg).encode("utf-8")).hexdigest()[:16]


def _as_list(v):
    return v if isinstance(v, list) else [v]


def build_model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        cell_kind=cfg.get("model.cell", "gru"),
        hidden=cfg.get("model.hidden", 256),
        layers=cfg.get("model.layers", 1),
    )


def build_trainer_config(cfg: dict, **overrides) -> TrainerConfig:
    kwargs = {}
    for f in dataclasses.fields(TrainerConfig):
        key = f"trainer.{f.name}"
        if key in cfg:
            kwargs[f.name] = cfg[key]
    kwargs.update(overrides)
    return TrainerConfig(**kwargs)


def build_curriculum_config(cfg: dict, **overrides) -> cur.CurriculumConfig:
    mapping = {
        "strategy": "curriculum.strategy",
        "transition": "curriculum.transition",
        "eps_start": "curriculum.eps_start",
        "eps_end": "curriculum.eps_end",
        "length": "curriculum.length",
        "k": "curriculum.k",
        "epsilon_const": "curriculum.epsilon",
        "stf_tau": "curriculum.stf_tau",
    }
    kwargs = {}
    for field, key in mapping.items():
        if key in cfg:
            kwargs[field] = cfg[key]
    kwargs.update(overrides)
    if "strategy" not in kwargs:
        raise InvalidInputError("config is missing curriculum.strategy")
    strategy = kwargs["strategy"]
    if strategy.startswith("CL_ITF") and "eps_start" not in kwargs \
            and "eps_end" not in kwargs:
        kwargs["eps_start"], kwargs["eps_end"] = 0.0, 1.0
    if strategy.startswith("CL_DTF") and "eps_start" not in kwargs \
            and "eps_end" not in kwargs:
        kwargs["eps_start"], kwargs["eps_end"] = 1.0, 0.0
    return cur.CurriculumConfig(**kwargs)


def system_from_config(cfg: dict) -> dynsys.SystemSpec:
    name = cfg.get("system.name")
    if name is None:
        raise InvalidInputError("config is missing system.name")
    overrides = {}
    for key, value in cfg.items():
        if key.startswith("system.params."):
            overrides[key[len("system.params."):]] = float(value)
    return dynsys.get_system(name, **overrides)


def scale_lengths(lengths, scale: float) -> list:
    """Scale a curriculum-length grid, rounding half up, minimum 1."""
    if scale <= 0:
        raise InvalidInputError("scale must be positive")
    return [max(1, int(math.floor(v * scale + 0.5))) for v in lengths]


def _preset_cells(preset: str):
    if preset == "essential":
        cells = [{"strategy": "FR"}, {"strategy": "TF"}]
        for strategy in ("CL_DTF_P", "CL_DTF_D", "CL_ITF_P", "CL_ITF_D"):
            inc = strategy.startswith("CL_ITF")
            for length in cur.ESSENTIAL_LENGTHS:
                cells.append({
                    "strategy": strategy, "transition": "linear",
                    "eps_start": 0.0 if inc else 1.0,
                    "eps_end": 1.0 if inc else 0.0,
                    "length": length,
                })
        return cells
    if preset == "exploratory":
        cells = [{"strategy": "FR"}, {"strategy": "TF"}]
        for epsilon in cur.EXPLORATORY_GRID["CL_CTF_P"]["epsilon"]:
            cells.append({"strategy": "CL_CTF_P", "epsilon_const": epsilon})
        for family, incr in (("CL_DTF", False), ("CL_ITF", True)):
            grid = cur.EXPLORATORY_GRID[family]
            for suffix in ("_P", "_D"):
                for transition in grid["transitions"]:
                    for eps in grid["eps_start"]:
                        cells.append({
                            "strategy": family + suffix,
                            "transition": transition,
                            "eps_start": eps if not incr else eps,
                            "eps_end": grid["eps_end"],
                            "length": grid["length"],
                        })
        return cells
    raise InvalidInputError(f"unknown sweep preset {preset!r}")


def sweep_cells(cfg: dict, scale: float = 1.0) -> list:
    """Expand a sweep config into per-run cell descriptors."""
    seeds = [int(s) for s in _as_list(cfg.get("sweep.seeds", [0]))]
    if "sweep.preset" in cfg:
        base_cells = _preset_cells(cfg["sweep.preset"])
        if scale != 1.0:
            for cell in base_cells:
                if "length" in cell:
                    cell["length"] = scale_lengths([cell["length"]], scale)[0]
    else:
        strategies = [str(s) for s in _as_list(cfg.get("sweep.strategies", []))]
        if not strategies:
            raise InvalidInputError(
                "sweep needs sweep.strategies, or sweep.preset")
        lengths = [int(v) for v in _as_list(cfg.get("sweep.lengths", [1000]))]
        lengths = scale_lengths(lengths, scale)
        transition = cfg.get("sweep.transition", "linear")
        base_cells = []
        for strategy in strategies:
            if strategy not in cur.STRATEGIES:
                raise InvalidInputError(
                    f"unknown strategy {strategy!r} in sweep.strategies")
            if strategy in ("FR", "TF", "STF"):
                base_cells.append({"strategy": strategy})
            elif strategy == "CL_CTF_P":
                base_cells.append({
                    "strategy": strategy,
                    "epsilon_const": cfg.get("curriculum.epsilon", 0.5)})
            else:
                inc = strategy.startswith("CL_ITF")
                for length in lengths:
                    base_cells.append({
                        "strategy": strategy, "transition": transition,
                        "eps_start": 0.0 if inc else 1.0,
                        "eps_end": 1.0 if inc else 0.0,
                        "length": length,
                    })
    cells = []
    for seed in seeds:
        for base in base_cells:
            cell = dict(base)
            cell["seed"] = seed
            cells.append(cell)
    return cells


def cell_name(cell: dict) -> str:
    parts = [cell["strategy"]]
    if "length" in cell:
        parts.append(f"L{cell['length']}")
    if "epsilon_const" in cell:
        parts.append(f"e{cell['epsilon_const']}")
    parts.append(f"s{cell['seed']}")
    return "_".join(parts)

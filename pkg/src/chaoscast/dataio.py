"""Dataset construction: trajectories or CSV in, normalized windows out.

Series are z-normalized with statistics of the training slice only and
split 80/10/10 (train/val/test, contiguous). Two windowing flavours are
provided: ``window`` yields training pairs fully contained in one split,
``forecast_segments`` yields evaluation windows whose forecast part tiles
a split while the warm-up context is taken from the steps immediately
before it (needed when a split is shorter than context + forecast).
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import dynsys
from .errors import FormatError, InvalidInputError, VersionError

__all__ = [
    "Dataset",
    "SequencePair",
    "dataset_from_array",
    "generate_dataset",
    "load_external_csv",
    "prediction_length",
    "window",
    "forecast_segments",
    "save_dataset",
    "load_dataset",
]

_MAGIC = b"CHAOSDS\x00"
_VERSION = 1


@dataclass
class Dataset:
    """Normalized multivariate series with split boundaries and provenance."""

    values: np.ndarray      # (steps, d), z-normalized
    mean: np.ndarray        # (d,) of the raw training slice
    std: np.ndarray         # (d,)
    sigma_scalar: float     # scalar std of the normalized training slice
    train_end: int
    val_end: int
    dt: float
    lle: float              # NaN when unknown
    source: dict

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def split(self) -> tuple:
        return (self.train_end, self.val_end)

    @property
    def has_lle(self) -> bool:
        return math.isfinite(self.lle) and self.lle > 0

    def split_bounds(self, split: str) -> tuple:
        bounds = {"train": (0, self.train_end),
                  "val": (self.train_end, self.val_end),
                  "test": (self.val_end, self.steps)}
        if split not in bounds:
            raise InvalidInputError(f"split must be train|val|test, got {split!r}")
        return bounds[split]

    def denormalize(self, arr: np.ndarray) -> np.ndarray:
        return arr * self.std + self.mean

    def normalize(self, arr: np.ndarray) -> np.ndarray:
        return (arr - self.mean) / self.std


@dataclass
class SequencePair:
    """A context window and the target window that immediately follows it."""

    input: np.ndarray   # (n, d)
    target: np.ndarray  # (m, d)
    origin_index: int

    def __post_init__(self):
        if self.input.shape[0] < 1 or self.target.shape[0] < 1:
            raise InvalidInputError("input and target must be non-empty")


def _build_dataset(raw: np.ndarray, dt: float, lle: float, source: dict) -> Dataset:
    steps = raw.shape[0]
    if steps < 2:
        raise InvalidInputError(f"need at least 2 steps, got {steps}")
    train_end = int(0.8 * steps)
    val_end = int(0.9 * steps)
    train = raw[:train_end]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    if np.any(std <= 0):
        bad = int(np.argmin(std))
        raise InvalidInputError(f"training slice is constant in dimension {bad}")
    values = (raw - mean) / std
    sigma_scalar = float(values[:train_end].std())
    return Dataset(values, mean, std, sigma_scalar, train_end, val_end,
                   float(dt), float(lle), source)


def dataset_from_array(raw, dt: float = 1.0, lle: float = float("nan"),
                       source: dict = None) -> Dataset:
    """Normalize and split a raw (steps, d) series supplied directly."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.ndim != 2:
        raise InvalidInputError("raw series must be a (steps, d) matrix")
    return _build_dataset(raw, dt, lle, source or {"kind": "external", "path": None})


def generate_dataset(spec: dynsys.SystemSpec, n_samples: int = 10000,
                     seed: int = 0, transient: int = 1000,
                     substeps: int = 10, x0=None) -> Dataset:
    """Integrate a system preset into a normalized, split dataset.

    The first ``transient`` sampled states are discarded so the series
    lies on the attractor. The initial state is the preset default with
    a small seed-dependent perturbation (recorded in ``source``), so
    different seeds yield different trajectories of the same system.
    """
    if n_samples < 10:
        raise InvalidInputError("n_samples must be >= 10")
    if x0 is None:
        rng = np.random.default_rng(seed)
        x0 = dynsys.default_x0(spec) + rng.uniform(-0.01, 0.01, spec.dim)
    x0 = np.asarray(x0, dtype=float)
    traj = dynsys.integrate(spec, x0, transient + n_samples, substeps)
    raw = traj.values[transient:]
    source = {
        "kind": "generated",
        "system": spec.name,
        "params": {k: float(v) for k, v in sorted(spec.params.items())},
        "dim": spec.dim,
        "seed": int(seed),
        "x0": [float(v) for v in x0],
        "transient": int(transient),
        "substeps": int(substeps),
    }
    return _build_dataset(raw, spec.dt, spec.lle, source)


def load_external_csv(path, columns=None, dt: float = 1.0,
                      lle: float = float("nan")) -> Dataset:
    """Parse a numeric CSV (one row per time step) into a Dataset.

    ``dt`` and ``lle`` are caller-supplied; Lyapunov-time metrics are
    disabled downstream when ``lle`` is NaN.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                row = [float(tok) for tok in fields]
            except ValueError:
                raise FormatError(f"{path}: non-numeric value at line {lineno}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            rows.append(row)
    if not rows:
        raise InvalidInputError(f"{path}: file contains no data rows")
    raw = np.asarray(rows, dtype=float)
    if columns is not None:
        raw = raw[:, list(columns)]
    source = {"kind": "external", "path": str(path),
              "columns": list(columns) if columns is not None else None}
    return _build_dataset(raw, dt, lle, source)


def prediction_length(dt: float, lle: float) -> int:
    """Forecast steps covering one Lyapunov time: ceil(1 / (dt * lle))."""
    if dt <= 0 or not lle > 0:
        raise InvalidInputError(f"dt and lle must be positive, got dt={dt}, lle={lle}")
    return int(math.ceil(1.0 / (dt * lle)))


def window(ds: Dataset, split: str, n: int = 150, m: int = None,
           stride: int = 1) -> list:
    """Sliding (input, target) pairs fully contained in one split."""
    if m is None:
        m = prediction_length(ds.dt, ds.lle)
    if n < 1 or m < 1 or stride < 1:
        raise InvalidInputError("n, m, and stride must be >= 1")
    lo, hi = ds.split_bounds(split)
    length = hi - lo
    if length < n + m:
        raise InvalidInputError(
            f"split {split!r} holds {length} steps; windows need at least {n + m}")
    pairs = []
    for s in range(lo, hi - (n + m) + 1, stride):
        pairs.append(SequencePair(ds.values[s:s + n], ds.values[s + n:s + n + m], s))
    return pairs


def forecast_segments(ds: Dataset, split: str, n: int, horizon: int,
                      stride: int = None) -> list:
    """Evaluation windows: forecast part tiles the split, context precedes it.

    Non-overlapping by default (stride = horizon). The n-step context may
    reach into the steps before the split (never into forecast targets),
    which keeps one-Lyapunov-time evaluation possible on short splits.
    """
    if stride is None:
        stride = horizon
    if n < 1 or horizon < 1 or stride < 1:
        raise InvalidInputError("n, horizon, and stride must be >= 1")
    lo, hi = ds.split_bounds(split)
    if hi - lo < horizon:
        raise InvalidInputError(
            f"split {split!r} holds {hi - lo} steps; forecasting needs at least {horizon}")
    if lo - n < 0:
        raise InvalidInputError(
            f"context of {n} steps before index {lo} reaches past the start of the series")
    pairs = []
    for s in range(lo, hi - horizon + 1, stride):
        pairs.append(SequencePair(ds.values[s - n:s], ds.values[s:s + horizon], s - n))
    return pairs


def save_dataset(ds: Dataset, path) -> None:
    """Write the versioned binary dataset format (bit-exact round trip)."""
    header = {
        "steps": ds.steps,
        "d": ds.dim,
        "dt": ds.dt,
        "lle": None if math.isnan(ds.lle) else ds.lle,
        "sigma_scalar": ds.sigma_scalar,
        "train_end": ds.train_end,
        "val_end": ds.val_end,
        "mean": [float(v) for v in ds.mean],
        "std": [float(v) for v in ds.std],
        "source": ds.source,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ds.values, dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise FormatError(f"{path}: not a dataset file (bad magic)")
        head = fh.read(8)
        if len(head) < 8:
            raise FormatError(f"{path}: truncated header")
        version, blob_len = struct.unpack("<II", head)
        if version != _VERSION:
            raise VersionError(f"{path}: unsupported dataset version {version}")
        blob = fh.read(blob_len)
        if len(blob) < blob_len:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: corrupt header ({exc})") from None
        steps, d = header["steps"], header["d"]
        payload = fh.read(steps * d * 8)
        if len(payload) < steps * d * 8:
            raise FormatError(f"{path}: truncated values section")
        values = np.frombuffer(payload, dtype="<f8").reshape(steps, d).copy()
    lle = header["lle"]
    return Dataset(
        values=values,
        mean=np.asarray(header["mean"], dtype=float),
        std=np.asarray(header["std"], dtype=float),
        sigma_scalar=float(header["sigma_scalar"]),
        train_end=int(header["train_end"]),
        val_end=int(header["val_end"]),
        dt=float(header["dt"]),
        lle=float("nan") if lle is None else float(lle),
        source=header["source"],
    )

"""Training loop wiring datasets, the recurrent model, and a curriculum.

One epoch = one pass over the shuffled training windows. The TF ratio is
evaluated once per epoch; masks are drawn per sequence inside each batch
from streams seeded by (run seed, epoch, batch index), so a run is fully
reproducible and an interrupted run resumes to the exact same continuation.
Validation loss is always computed with a pure free-running rollout so
model selection matches inference conditions.
"""
from __future__ import annotations

import dataclasses
import json
import math
import struct
import time

import numpy as np

from . import curriculum as cur
from . import nn
from .dataio import Dataset, forecast_segments, prediction_length, window
from .errors import DivergenceError, InvalidInputError, VersionError

__all__ = [
    "ModelConfig",
    "TrainerConfig",
    "TrainLog",
    "EpochRecord",
    "PlateauScheduler",
    "EarlyStopper",
    "train",
    "checkpoint_save",
    "checkpoint_resume",
]

_CKPT_MAGIC = b"CHAOSCK\x00"
_CKPT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    cell_kind: str = "gru"
    hidden: int = 256
    layers: int = 1

    def __post_init__(self):
        if self.cell_kind not in nn.CELL_KINDS:
            raise InvalidInputError(f"cell_kind must be one of {nn.CELL_KINDS}")
        if self.hidden < 1:
            raise InvalidInputError("hidden must be >= 1")
        if self.layers != 1:
            raise InvalidInputError("only single-layer encoder/decoder cells are supported")


@dataclasses.dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 128
    lr0: float = 1e-3
    plateau_patience: int = 10
    lr_factor: float = 0.6
    min_lr: float = 3e-6
    es_patience: int = 100
    es_min_improvement: float = 0.01
    max_epochs: int = 1000
    seed: int = 0
    detach_feedback: bool = False
    scheduler_enabled: bool = True
    n: int = 150
    m: int = None           # decoder horizon; None = one Lyapunov time
    train_stride: int = 1
    val_stride: int = None  # validation window stride; None = m (no overlap)
    checkpoint_every: int = 0   # epochs between periodic checkpoints; 0 = final only

    def __post_init__(self):
        if not 0.0 < self.lr_factor < 1.0:
            raise InvalidInputError("lr_factor must lie in (0, 1)")
        if not 0.0 < self.es_min_improvement < 1.0:
            raise InvalidInputError("es_min_improvement must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidInputError("batch_size and max_epochs must be >= 1")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")


@dataclasses.dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    epsilon: float
    lr: float
    decoder_grad_norm_mean: float
    seconds: float

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class TrainLog:
    records: list = dataclasses.field(default_factory=list)
    stop_reason: str = "unknown"
    best_epoch: int = -1
    best_val_loss: float = math.inf
    meta: dict = dataclasses.field(default_factory=dict)

    def equivalent(self, other: "TrainLog", from_epoch: int = 0) -> bool:
        """Equality over all deterministic fields (wall time excluded)."""
        a = [r for r in self.records if r.epoch >= from_epoch]
        b = [r for r in other.records if r.epoch >= from_epoch]
        if len(a) != len(b):
            return False
        for ra, rb in zip(a, b):
            da, db = ra.to_dict(), rb.to_dict()
            da.pop("seconds")
            db.pop("seconds")
            if da != db:
                return False
        return (self.stop_reason == other.stop_reason
                and self.best_epoch == other.best_epoch
                and self.best_val_loss == other.best_val_loss)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
            terminal = {"stop_reason": self.stop_reason,
                        "best_epoch": self.best_epoch,
                        "best_val_loss": self.best_val_loss}
            terminal.update(self.meta)
            fh.write(json.dumps(terminal, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TrainLog":
        records = []
        terminal = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "epoch" in obj:
                    records.append(EpochRecord(**obj))
                else:
                    terminal = obj
        meta = {k: v for k, v in terminal.items()
                if k not in ("stop_reason", "best_epoch", "best_val_loss")}
        return cls(records, terminal.get("stop_reason", "unknown"),
                   terminal.get("best_epoch", -1),
                   terminal.get("best_val_loss", math.inf), meta)


class PlateauScheduler:
    """Reduce-on-plateau: strict non-improvement for `patience` epochs
    multiplies the rate by `factor`, clamped at `min_lr`."""

    def __init__(self, lr0, factor, patience, min_lr, enabled=True):
        self.lr = lr0
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.enabled = enabled
        self.best = math.inf
        self.wait = 0

    def step(self, val_loss: float) -> float:
        if not self.enabled:
            return self.lr
        if val_loss < self.best:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.wait = 0
        return self.lr

    def state(self):
        return {"lr": self.lr, "best": _f(self.best), "wait": self.wait}

    def load(self, s):
        self.lr = s["lr"]
        self.best = _unf(s["best"])
        self.wait = s["wait"]


class EarlyStopper:
    """Stop after `patience` epochs without a relative improvement of at
    least `min_improvement` over the best validation loss seen so far.

    The comparison base is the running minimum, so a drip of sub-threshold
    improvements cannot keep a stagnating run alive.
    """

    def __init__(self, patience, min_improvement):
        self.patience = patience
        self.min_improvement = min_improvement
        self.best = math.inf
        self.wait = 0

    def step(self, val_loss: float) -> bool:
        if val_loss < self.best * (1.0 - self.min_improvement):
            self.wait = 0
        else:
            self.wait += 1
        if val_loss < self.best:
            self.best = val_loss
        return self.wait >= self.patience

    def state(self):
        return {"best": _f(self.best), "wait": self.wait}

    def load(self, s):
        self.best = _unf(s["best"])
        self.wait = s["wait"]


def _f(x):
    return None if math.isinf(x) else x


def _unf(x):
    return math.inf if x is None else x


def early_stop_check(val_losses, patience: int = 100,
                     min_improvement: float = 0.01) -> bool:
    """Would early stopping trigger at the end of this loss history?"""
    stopper = EarlyStopper(patience, min_improvement)
    stop = False
    for v in val_losses:
        stop = stopper.step(v)
    return stop


def _epoch_rng(seed, epoch, stream):
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, stream]))


def _fr_val_loss(params, contexts, targets):
    masks = np.zeros((targets.shape[0], targets.shape[1] - 1), dtype=bool)
    return nn.forward_loss(params, contexts, targets, masks)


def train(model_cfg: ModelConfig, trainer_cfg: TrainerConfig,
          curriculum_cfg: cur.CurriculumConfig, dataset: Dataset, *,
          log_path=None, checkpoint_path=None, resume_from=None, meta=None):
    """Run the full training loop; returns (best-epoch params, TrainLog).

    On a numerical blow-up the log is finalized with stop_reason
    "divergence" (and written to ``log_path`` if given) before the
    DivergenceError propagates.
    """
    tc = trainer_cfg
    m = tc.m if tc.m is not None else prediction_length(dataset.dt, dataset.lle)
    if curriculum_cfg.strategy == "STF" and curriculum_cfg.stf_tau is None:
        if not dataset.has_lle:
            raise InvalidInputError("STF needs a dataset LLE to derive its period")
        curriculum_cfg = dataclasses.replace(
            curriculum_cfg, stf_tau=cur.stf_tau(dataset.lle, dataset.dt))

    pairs = window(dataset, "train", tc.n, m, tc.train_stride)
    inputs = np.stack([p.input for p in pairs])
    targets = np.stack([p.target for p in pairs])
    n_pairs = inputs.shape[0]

    val_segs = forecast_segments(dataset, "val", tc.n, m, stride=tc.val_stride)
    val_ctx = np.stack([s.input for s in val_segs])
    val_tgt = np.stack([s.target for s in val_segs])

    params = nn.init_params(model_cfg.cell_kind, dataset.dim, model_cfg.hidden,
                            tc.seed)
    opt = nn.adam_init(params)
    sched = PlateauScheduler(tc.lr0, tc.lr_factor, tc.plateau_patience,
                             tc.min_lr, tc.scheduler_enabled)
    stopper = EarlyStopper(tc.es_patience, tc.es_min_improvement)
    log = TrainLog(meta=dict(meta or {}))
    best_params = params
    best_val = math.inf
    best_epoch = -1
    start_epoch = 0

    if resume_from is not None:
        state = checkpoint_resume(resume_from)
        if (state["cell_kind"] != model_cfg.cell_kind
                or state["hidden"] != model_cfg.hidden
                or state["data_dim"] != dataset.dim):
            raise VersionError(
                "checkpoint model shape does not match the requested model")
        params = params.with_vector(state["params"])
        best_params = params.with_vector(state["best_params"])
        opt = nn.AdamState(state["adam_m"], state["adam_v"], state["adam_t"])
        sched.load(state["scheduler"])
        stopper.load(state["stopper"])
        best_val = _unf(state["best_val"])
        best_epoch = state["best_epoch"]
        start_epoch = state["epoch_next"]
        log.records = [EpochRecord(**r) for r in state["records"]]

    def _save_checkpoint(epoch_next):
        if checkpoint_path is None:
            return
        state = {
            "cell_kind": model_cfg.cell_kind,
            "hidden": model_cfg.hidden,
            "data_dim": dataset.dim,
            "meta": log.meta,
            "seed": tc.seed,
            "epoch_next": epoch_next,
            "adam_t": opt.t,
            "scheduler": sched.state(),
            "stopper": stopper.state(),
            "best_val": _f(best_val),
            "best_epoch": best_epoch,
            "records": [dict(r.to_dict(), seconds=0.0) for r in log.records],
            "params": params.to_vector(),
            "best_params": best_params.to_vector(),
            "adam_m": opt.m,
            "adam_v": opt.v,
        }
        checkpoint_save(checkpoint_path, state)

    def _finalize(reason):
        log.stop_reason = reason
        log.best_epoch = best_epoch
        log.best_val_loss = best_val if best_epoch >= 0 else math.inf
        if log_path is not None:
            log.to_jsonl(log_path)

    stop_reason = "max_epochs"
    try:
        for epoch in range(start_epoch, tc.max_epochs):
            t0 = time.perf_counter()
            eps = cur.eval_epsilon(curriculum_cfg, epoch)
            order = _epoch_rng(tc.seed, epoch, 0).permutation(n_pairs)
            loss_sum = 0.0
            norm_sum = 0.0
            n_batches = 0
            lr = sched.lr
            for b0 in range(0, n_pairs, tc.batch_size):
                idx = order[b0:b0 + tc.batch_size]
                bsz = idx.shape[0]
                masks = cur.build_masks(curriculum_cfg, eps, m, bsz,
                                        _epoch_rng(tc.seed, epoch, 1 + n_batches))
                try:
                    grads, loss, dec_norm = nn.backward(
                        params, inputs[idx], targets[idx], masks,
                        detach_feedback=tc.detach_feedback)
                except DivergenceError as exc:
                    raise DivergenceError(
                        f"{exc} (epoch {epoch}, batch {n_batches})",
                        step=epoch) from None
                params, opt = nn.adam_step(params, grads, opt, lr)
                loss_sum += loss * bsz
                norm_sum += dec_norm
                n_batches += 1
            val_loss = _fr_val_loss(params, val_ctx, val_tgt)
            if not math.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss (epoch {epoch})",
                                      step=epoch)
            log.records.append(EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n_pairs,
                val_loss=val_loss,
                epsilon=eps,
                lr=lr,
                decoder_grad_norm_mean=norm_sum / max(n_batches, 1),
                seconds=time.perf_counter() - t0,
            ))
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_params = params
            sched.step(val_loss)
            stop = stopper.step(val_loss)
            if tc.checkpoint_every and (epoch + 1) % tc.checkpoint_every == 0:
                _save_checkpoint(epoch + 1)
            if stop:
                stop_reason = "early_stop"
                break
    except DivergenceError:
        _finalize("divergence")
        _save_checkpoint(len(log.records))
        raise

    _finalize(stop_reason)
    _save_checkpoint(log.records[-1].epoch + 1 if log.records else 0)
    return best_params, log


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, JSON header, float64 array payload

_ARRAY_KEYS = ("params", "best_params", "adam_m", "adam_v")


def checkpoint_save(path, state: dict) -> None:
    header = {k: v for k, v in state.items() if k not in _ARRAY_KEYS}
    header["array_sizes"] = {k: int(state[k].size) for k in _ARRAY_KEYS}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for k in _ARRAY_KEYS:
            fh.write(np.ascontiguousarray(state[k], dtype="<f8").tobytes())


def checkpoint_resume(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise VersionError(f"{path}: not a checkpoint file")
        head = fh.read(8)
        if len(head) < 8:
            raise VersionError(f"{path}: truncated checkpoint")
        version, blob_len = struct.unpack("<II", head)
        if version != _CKPT_VERSION:
            raise VersionError(f"{path}: unsupported checkpoint version {version}")
        blob = fh.read(blob_len)
        if len(blob) < blob_len:
            raise VersionError(f"{path}: truncated checkpoint header")
        state = json.loads(blob.decode("utf-8"))
        sizes = state.pop("array_sizes")
        for k in _ARRAY_KEYS:
            payload = fh.read(sizes[k] * 8)
            if len(payload) < sizes[k] * 8:
                raise VersionError(f"{path}: truncated checkpoint payload")
            state[k] = np.frombuffer(payload, dtype="<f8").copy()
    return state

"""Forecast evaluation: NRMSE, per-step R-squared, Lyapunov-time horizon.

Per-step R-squared pools squared errors across all test sequences and
data dimensions jointly, with the total sum of squares measured against
the pooled per-step mean; this stays well defined for one-dimensional
series as long as several sequences (or dimensions) are pooled. No
randomness anywhere in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import Dataset, forecast_segments, prediction_length
from .errors import InvalidInputError, UndefinedMetricError

__all__ = [
    "EvalReport",
    "nrmse_step",
    "nrmse_horizon",
    "r2_per_step",
    "lt_horizon",
    "rel_improvement",
    "evaluate",
]


@dataclass
class EvalReport:
    """Aggregated metrics of one model over the test split."""

    nrmse_mean_1lt: float
    nrmse_last10: float
    lt_r2_horizon: float           # NaN when the dataset has no LLE
    horizon_steps: int
    n_test_sequences: int
    r2_curve: np.ndarray = field(repr=False)
    nrmse_curve: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "nrmse_mean_1lt": self.nrmse_mean_1lt,
            "nrmse_last10": self.nrmse_last10,
            "lt_r2_horizon": None if math.isnan(self.lt_r2_horizon)
                             else self.lt_r2_horizon,
            "horizon_steps": self.horizon_steps,
            "n_test_sequences": self.n_test_sequences,
            "r2_curve": [float(v) for v in self.r2_curve],
            "nrmse_curve": [float(v) for v in self.nrmse_curve],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        lt = d["lt_r2_horizon"]
        return cls(
            nrmse_mean_1lt=float(d["nrmse_mean_1lt"]),
            nrmse_last10=float(d["nrmse_last10"]),
            lt_r2_horizon=float("nan") if lt is None else float(lt),
            horizon_steps=int(d["horizon_steps"]),
            n_test_sequences=int(d["n_test_sequences"]),
            r2_curve=np.asarray(d["r2_curve"], dtype=float),
            nrmse_curve=np.asarray(d["nrmse_curve"], dtype=float),
        )


def nrmse_step(y, yhat, sigma: float) -> float:
    """RMSE over the dimensions of one step, divided by sigma."""
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise InvalidInputError("y and yhat shapes differ")
    return float(np.sqrt(np.mean((y - yhat) ** 2)) / sigma)


def _nrmse_curve(truth, pred, sigma):
    err = np.asarray(truth, dtype=float) - np.asarray(pred, dtype=float)
    return np.sqrt(np.mean(err * err, axis=-1)) / sigma


def nrmse_horizon(truth, pred, sigma: float):
    """(mean over all steps, mean over the final ceil(m/10) steps)."""
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape or truth.ndim != 2:
        raise InvalidInputError("truth and pred must be matching (m, d) matrices")
    curve = _nrmse_curve(truth, pred, sigma)
    m = curve.shape[0]
    tail = math.ceil(m / 10)
    return float(curve.mean()), float(curve[m - tail:].mean())


def r2_per_step(truths, preds) -> np.ndarray:
    """R-squared at each forecast step, pooled over sequences and dims."""
    truths = np.asarray(truths, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if truths.shape != preds.shape or truths.ndim != 3:
        raise InvalidInputError("expected matching (sequences, m, d) arrays")
    step_mean = truths.mean(axis=(0, 2), keepdims=True)
    sst = ((truths - step_mean) ** 2).sum(axis=(0, 2))
    sse = ((truths - preds) ** 2).sum(axis=(0, 2))
    if np.any(sst == 0):
        step = int(np.argmax(sst == 0))
        raise UndefinedMetricError(
            f"R-squared undefined at step {step}: pooled truths are constant")
    return 1.0 - sse / sst


def lt_horizon(r2_curve, threshold: float = 0.9, dt: float = None,
               lle: float = None) -> float:
    """Lyapunov times predicted before R-squared first drops below threshold."""
    if dt is None or lle is None or dt <= 0 or not lle > 0:
        raise InvalidInputError("lt_horizon needs positive dt and lle")
    r2_curve = np.asarray(r2_curve, dtype=float)
    below = np.nonzero(r2_curve < threshold)[0]
    k = int(below[0]) if below.size else r2_curve.shape[0]
    return k * dt * lle


def rel_improvement(baseline_nrmse: float, candidate_nrmse: float) -> float:
    """Percent improvement of candidate over baseline (negative = worse)."""
    if baseline_nrmse <= 0:
        raise InvalidInputError("baseline NRMSE must be positive")
    return (1.0 - candidate_nrmse / baseline_nrmse) * 100.0


def _model_predictor(params: nn.ModelParams):
    def predict(context, horizon):
        B = context.shape[0]
        state = nn.encode(params, context)
        dummy = np.zeros((B, horizon, params.data_dim))
        masks = np.zeros((B, horizon - 1), dtype=bool) if horizon > 1 \
            else np.zeros((B, 0), dtype=bool)
        return nn.decode(params, state, context[:, -1, :], dummy, masks)
    return predict


def evaluate(model, dataset: Dataset, horizon_steps: int = None,
             warmup: int = 150, threshold: float = 0.9,
             stride: int = None) -> EvalReport:
    """Free-running rollout over test windows, all metrics.

    ``model`` is either ModelParams or a callable
    ``predict(context (B, n, d), horizon) -> (B, horizon, d)`` (handy for
    oracle test doubles). Each window encodes ``warmup`` ground-truth
    steps and then predicts ``horizon_steps`` autoregressively. Windows
    tile the test split without overlap by default; pass a smaller
    ``stride`` to average over more (overlapping) rollout starts when the
    split is short. Multi-LT curves come from passing a horizon of
    several Lyapunov times.
    """
    if dataset.has_lle:
        m_lt = prediction_length(dataset.dt, dataset.lle)
    else:
        if horizon_steps is None:
            raise InvalidInputError(
                "dataset has no LLE; horizon_steps must be given explicitly")
        m_lt = horizon_steps
    if horizon_steps is None:
        horizon_steps = m_lt
    if horizon_steps < 1 or warmup < 1:
        raise InvalidInputError("horizon_steps and warmup must be >= 1")

    segs = forecast_segments(dataset, "test", warmup, horizon_steps,
                             stride=stride)
    context = np.stack([s.input for s in segs])
    truth = np.stack([s.target for s in segs])
    predict = _model_predictor(model) if isinstance(model, nn.ModelParams) else model
    pred = np.asarray(predict(context, horizon_steps), dtype=float)
    if pred.shape != truth.shape:
        raise InvalidInputError(
            f"predictor returned shape {pred.shape}, expected {truth.shape}")

    sigma = dataset.sigma_scalar
    nrmse_curve = _nrmse_curve(truth, pred, sigma).mean(axis=0)
    lt_slice = min(m_lt, horizon_steps)
    tail = math.ceil(lt_slice / 10)
    nrmse_mean = float(nrmse_curve[:lt_slice].mean())
    nrmse_last10 = float(nrmse_curve[lt_slice - tail:lt_slice].mean())
    r2 = r2_per_step(truth, pred)
    if dataset.has_lle:
        lt = lt_horizon(r2, threshold, dataset.dt, dataset.lle)
    else:
        lt = float("nan")
    return EvalReport(
        nrmse_mean_1lt=nrmse_mean,
        nrmse_last10=nrmse_last10,
        lt_r2_horizon=lt,
        horizon_steps=int(horizon_steps),
        n_test_sequences=len(segs),
        r2_curve=r2,
        nrmse_curve=nrmse_curve,
    )

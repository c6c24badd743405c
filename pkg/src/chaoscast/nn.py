"""Dense-math encoder-decoder recurrent core with exact BPTT.

Cells (GRU, vanilla RNN, LSTM) are implemented directly on numpy arrays;
gradients are hand-derived backpropagation through time, including flow
through the autoregressive feedback edge on free-running decoder steps
(optionally severed via ``detach_feedback``). Everything is float64 and
fully deterministic; correctness is pinned by central finite differences
in the test suite.

Internally sequences are time-major (T, B, dim); the public entry points
accept single sequences or batch-first arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidInputError

__all__ = [
    "CellParams",
    "ModelParams",
    "HiddenState",
    "AdamState",
    "init_params",
    "cell_forward",
    "encode",
    "decode",
    "forward_loss",
    "backward",
    "adam_init",
    "adam_step",
]

CELL_KINDS = ("gru", "rnn", "lstm")
GATE_COUNT = {"gru": 3, "rnn": 1, "lstm": 4}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class CellParams:
    """Weights of one recurrent cell, gates stacked along the last axis.

    Gate order: GRU (update z, reset r, candidate), LSTM (i, f, g, o).
    """

    kind: str
    input_dim: int
    hidden_dim: int
    w_in: np.ndarray   # (input_dim, gates*hidden)
    w_rec: np.ndarray  # (hidden_dim, gates*hidden)
    bias: np.ndarray   # (gates*hidden,)

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise InvalidInputError(f"cell kind must be one of {CELL_KINDS}, got {self.kind!r}")
        g = GATE_COUNT[self.kind] * self.hidden_dim
        if self.w_in.shape != (self.input_dim, g) or \
           self.w_rec.shape != (self.hidden_dim, g) or self.bias.shape != (g,):
            raise InvalidInputError(f"inconsistent {self.kind} parameter shapes")

    def arrays(self):
        return (self.w_in, self.w_rec, self.bias)


@dataclass
class ModelParams:
    """Encoder cell + decoder cell + linear readout (hidden -> d)."""

    encoder: CellParams
    decoder: CellParams
    w_out: np.ndarray  # (hidden_dim, d)
    b_out: np.ndarray  # (d,)

    def __post_init__(self):
        if self.encoder.hidden_dim != self.decoder.hidden_dim:
            raise InvalidInputError("encoder and decoder hidden sizes differ")
        d = self.decoder.input_dim
        if self.w_out.shape != (self.decoder.hidden_dim, d) or self.b_out.shape != (d,):
            raise InvalidInputError("output layer shape does not match decoder")

    @property
    def data_dim(self) -> int:
        return self.decoder.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.decoder.hidden_dim

    def arrays(self):
        return self.encoder.arrays() + self.decoder.arrays() + (self.w_out, self.b_out)

    @property
    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_vector(self, vec: np.ndarray) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.num_params,):
            raise InvalidInputError(
                f"flat vector has {vec.shape} entries, expected {self.num_params}")
        out = []
        pos = 0
        for a in self.arrays():
            out.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        enc = CellParams(self.encoder.kind, self.encoder.input_dim,
                         self.encoder.hidden_dim, *out[0:3])
        dec = CellParams(self.decoder.kind, self.decoder.input_dim,
                         self.decoder.hidden_dim, *out[3:6])
        return ModelParams(enc, dec, out[6], out[7])


@dataclass
class HiddenState:
    """Recurrent state: h, plus the cell vector c for LSTM."""

    h: np.ndarray
    c: np.ndarray = None


def _init_cell(kind: str, input_dim: int, hidden_dim: int,
               rng: np.random.Generator) -> CellParams:
    g = GATE_COUNT[kind] * hidden_dim
    bound = 1.0 / math.sqrt(hidden_dim)
    w_in = rng.uniform(-bound, bound, (input_dim, g))
    w_rec = rng.uniform(-bound, bound, (hidden_dim, g))
    return CellParams(kind, input_dim, hidden_dim, w_in, w_rec, np.zeros(g))


def init_params(cell_kind: str, data_dim: int, hidden_dim: int,
                seed: int) -> ModelParams:
    """Seeded init: weights uniform within +-1/sqrt(hidden), biases zero."""
    if cell_kind not in CELL_KINDS:
        raise InvalidInputError(f"cell kind must be one of {CELL_KINDS}, got {cell_kind!r}")
    rng = np.random.default_rng(seed)
    enc = _init_cell(cell_kind, data_dim, hidden_dim, rng)
    dec = _init_cell(cell_kind, data_dim, hidden_dim, rng)
    bound = 1.0 / math.sqrt(hidden_dim)
    w_out = rng.uniform(-bound, bound, (hidden_dim, data_dim))
    return ModelParams(enc, dec, w_out, np.zeros(data_dim))


# ---------------------------------------------------------------------------
# cell steps (batched: x (B, in), h/c (B, H))

def _gru_step(p: CellParams, x, h):
    H = p.hidden_dim
    a = x @ p.w_in + p.bias
    rec = h @ p.w_rec[:, :2 * H]
    z = _sigmoid(a[:, :H] + rec[:, :H])
    r = _sigmoid(a[:, H:2 * H] + rec[:, H:])
    rh = r * h
    cand = np.tanh(a[:, 2 * H:] + rh @ p.w_rec[:, 2 * H:])
    h_new = (1.0 - z) * h + z * cand
    return h_new, (z, r, cand, rh)


def _rnn_step(p: CellParams, x, h):
    h_new = np.tanh(x @ p.w_in + h @ p.w_rec + p.bias)
    return h_new, ()


def _lstm_step(p: CellParams, x, h, c):
    H = p.hidden_dim
    a = x @ p.w_in + h @ p.w_rec + p.bias
    i = _sigmoid(a[:, :H])
    f = _sigmoid(a[:, H:2 * H])
    g = np.tanh(a[:, 2 * H:3 * H])
    o = _sigmoid(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (i, f, g, o, tc)


class _SeqCache:
    """Per-run activations needed by the backward pass (time-major)."""

    def __init__(self, p: CellParams, steps: int, batch: int):
        H = p.hidden_dim
        self.p = p
        self.steps = steps
        self.x = np.empty((steps, batch, p.input_dim))
        self.h = np.empty((steps + 1, batch, H))
        if p.kind == "lstm":
            self.c = np.empty((steps + 1, batch, H))
            self.gates = tuple(np.empty((steps, batch, H)) for _ in range(5))
        elif p.kind == "gru":
            self.gates = tuple(np.empty((steps, batch, H)) for _ in range(4))
        else:
            self.gates = ()

    def step(self, t, x, h, c):
        p = self.p
        self.x[t] = x
        if p.kind == "gru":
            h_new, cache = _gru_step(p, x, h)
            for buf, val in zip(self.gates, cache):
                buf[t] = val
            c_new = None
        elif p.kind == "rnn":
            h_new, _ = _rnn_step(p, x, h)
            c_new = None
        else:
            h_new, c_new, cache = _lstm_step(p, x, h, c)
            self.c[t + 1] = c_new
            for buf, val in zip(self.gates, cache):
                buf[t] = val
        self.h[t + 1] = h_new
        return h_new, c_new


def _cell_backward_step(cache: _SeqCache, t, dh, dc, dA):
    """One reverse step: fill dA[t], return (dh_prev, dc_prev)."""
    p = cache.p
    H = p.hidden_dim
    h_prev = cache.h[t]
    if p.kind == "gru":
        z, r, cand, _ = (g[t] for g in cache.gates)
        dz = dh * (cand - h_prev)
        dcand = dh * z
        dh_prev = dh * (1.0 - z)
        da_c = dcand * (1.0 - cand * cand)
        drh = da_c @ p.w_rec[:, 2 * H:].T
        dh_prev += drh * r
        dr = drh * h_prev
        dA[t, :, :H] = dz * z * (1.0 - z)
        dA[t, :, H:2 * H] = dr * r * (1.0 - r)
        dA[t, :, 2 * H:] = da_c
        dh_prev += dA[t, :, :2 * H] @ p.w_rec[:, :2 * H].T
        return dh_prev, None
    if p.kind == "rnn":
        h_new = cache.h[t + 1]
        dA[t] = dh * (1.0 - h_new * h_new)
        return dA[t] @ p.w_rec.T, None
    i, f, g, o, tc = (gb[t] for gb in cache.gates)
    c_prev = cache.c[t]
    do = dh * tc
    dc_tot = dc + dh * o * (1.0 - tc * tc)
    dA[t, :, :H] = (dc_tot * g) * i * (1.0 - i)
    dA[t, :, H:2 * H] = (dc_tot * c_prev) * f * (1.0 - f)
    dA[t, :, 2 * H:3 * H] = (dc_tot * i) * (1.0 - g * g)
    dA[t, :, 3 * H:] = do * o * (1.0 - o)
    return dA[t] @ p.w_rec.T, dc_tot * f


def _cell_weight_grads(cache: _SeqCache, dA) -> CellParams:
    """Fold stored per-step activation gradients into weight gradients.

    One large matrix product per weight block instead of a small one per
    time step.
    """
    p = cache.p
    T = cache.steps
    B = cache.x.shape[1]
    H = p.hidden_dim
    G = GATE_COUNT[p.kind]
    dA_flat = dA.reshape(T * B, G * H)
    x_flat = cache.x.reshape(T * B, p.input_dim)
    dw_in = x_flat.T @ dA_flat
    dbias = dA_flat.sum(axis=0)
    h_flat = cache.h[:-1].reshape(T * B, H)
    if p.kind == "gru":
        rh_flat = cache.gates[3].reshape(T * B, H)
        dw_rec = np.empty_like(p.w_rec)
        dw_rec[:, :2 * H] = h_flat.T @ dA_flat[:, :2 * H]
        dw_rec[:, 2 * H:] = rh_flat.T @ dA_flat[:, 2 * H:]
    else:
        dw_rec = h_flat.T @ dA_flat
    return CellParams(p.kind, p.input_dim, p.hidden_dim, dw_in, dw_rec, dbias)


# ---------------------------------------------------------------------------
# forward passes

def _as_batch(arr, ndim_single):
    """Promote a single-sequence array to batch form; report if promoted."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == ndim_single:
        return arr[None], True
    if arr.ndim == ndim_single + 1:
        return arr, False
    raise InvalidInputError(f"array has {arr.ndim} dimensions, expected "
                            f"{ndim_single} or {ndim_single + 1}")


def cell_forward(params: CellParams, x, state: HiddenState) -> HiddenState:
    """One cell update. Accepts single vectors or batched (B, dim) arrays."""
    x, single = _as_batch(x, 1)
    h, _ = _as_batch(state.h, 1)
    if x.shape[-1] != params.input_dim or h.shape[-1] != params.hidden_dim:
        raise InvalidInputError("cell_forward: shape mismatch with cell parameters")
    if params.kind == "lstm":
        c = np.zeros_like(h) if state.c is None else _as_batch(state.c, 1)[0]
        h_new, c_new, _ = _lstm_step(params, x, h, c)
        if single:
            return HiddenState(h_new[0], c_new[0])
        return HiddenState(h_new, c_new)
    if params.kind == "gru":
        h_new, _ = _gru_step(params, x, h)
    else:
        h_new, _ = _rnn_step(params, x, h)
    return HiddenState(h_new[0] if single else h_new)


def _encode_run(params: ModelParams, inputs):
    """inputs (B, n, d) -> final (h, c) and the cache of the run."""
    B, n, _ = inputs.shape
    p = params.encoder
    cache = _SeqCache(p, n, B)
    h = np.zeros((B, p.hidden_dim))
    c = np.zeros((B, p.hidden_dim)) if p.kind == "lstm" else None
    cache.h[0] = h
    if p.kind == "lstm":
        cache.c[0] = c
    for t in range(n):
        h, c = cache.step(t, inputs[:, t, :], h, c)
    return h, c, cache


def encode(params: ModelParams, inputs) -> HiddenState:
    """Fold the encoder over a ground-truth window from the zero state."""
    inputs, single = _as_batch(inputs, 2)
    if inputs.shape[1] < 1:
        raise InvalidInputError("encode needs at least one input step")
    if inputs.shape[2] != params.encoder.input_dim:
        raise InvalidInputError("encode: input dimension mismatch")
    h, c, _ = _encode_run(params, inputs)
    if single:
        return HiddenState(h[0], None if c is None else c[0])
    return HiddenState(h, c)


def _check_masks(masks, B, m):
    masks = np.asarray(masks, dtype=bool)
    if masks.shape != (B, m - 1):
        raise InvalidInputError(
            f"masks have shape {masks.shape}, expected ({B}, {m - 1})")
    return masks


def _decode_run(params: ModelParams, h, c, first_input, targets, masks):
    """targets (B, m, d), masks (B, m-1) -> preds (m, B, d) and cache."""
    B, m, d = targets.shape
    p = params.decoder
    cache = _SeqCache(p, m, B)
    cache.h[0] = h
    if p.kind == "lstm":
        cache.c[0] = c
    preds = np.empty((m, B, d))
    x = first_input
    for t in range(m):
        h, c = cache.step(t, x, h, c)
        preds[t] = h @ params.w_out + params.b_out
        if t < m - 1:
            tf = masks[:, t:t + 1]
            x = np.where(tf, targets[:, t, :], preds[t])
    return preds, cache


def decode(params: ModelParams, state: HiddenState, first_input, targets,
           mask) -> np.ndarray:
    """Roll the decoder for m steps under per-step TF decisions.

    Step 1 always consumes ``first_input`` (the ground truth preceding the
    targets); step t >= 2 consumes the previous target when the mask says
    teacher-force, otherwise the model's own previous prediction.
    """
    targets, single = _as_batch(targets, 2)
    B, m, d = targets.shape
    if d != params.data_dim:
        raise InvalidInputError("decode: target dimension mismatch")
    first_input, _ = _as_batch(first_input, 1)
    if first_input.shape != (B, d):
        raise InvalidInputError("decode: first_input shape mismatch")
    decisions = mask.decisions if hasattr(mask, "decisions") else np.asarray(mask)
    decisions = np.asarray(decisions, dtype=bool)
    if decisions.ndim == 1:
        decisions = np.broadcast_to(decisions, (B, m - 1))
    masks = _check_masks(decisions, B, m)
    h, _ = _as_batch(state.h, 1)
    c = None
    if params.decoder.kind == "lstm":
        c = np.zeros_like(h) if state.c is None else _as_batch(state.c, 1)[0]
    preds, _ = _decode_run(params, h, c, first_input, targets, masks)
    out = preds.swapaxes(0, 1)
    return out[0] if single else out


def _forward(params: ModelParams, inputs, targets, masks):
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 3 or targets.ndim != 3:
        raise InvalidInputError("expected batch-first (B, steps, d) arrays")
    B, m, d = targets.shape
    masks = _check_masks(masks, B, m)
    with np.errstate(over="ignore", invalid="ignore"):
        h, c, enc_cache = _encode_run(params, inputs)
        preds, dec_cache = _decode_run(params, h, c, inputs[:, -1, :], targets,
                                       masks)
    return preds, targets.swapaxes(0, 1), enc_cache, dec_cache, masks


def forward_loss(params: ModelParams, inputs, targets, masks) -> float:
    """MSE over every step, dimension, and batch element."""
    preds, targets_tm, _, _, _ = _forward(params, inputs, targets, masks)
    resid = preds - targets_tm
    return float(np.mean(resid * resid))


def backward(params: ModelParams, inputs, targets, masks,
             detach_feedback: bool = False):
    """Exact loss gradients for one batch.

    Returns (grads, loss, decoder_grad_norm) where ``grads`` mirrors the
    ModelParams layout and the norm covers the decoder cell weights (the
    quantity tracked per epoch for gradient monitoring). On free-running
    steps the gradient flows through the prediction fed back as the next
    input unless ``detach_feedback`` severs that edge.
    """
    preds, targets_tm, enc_cache, dec_cache, masks = _forward(
        params, inputs, targets, masks)
    m, B, d = preds.shape
    with np.errstate(over="ignore", invalid="ignore"):
        resid = preds - targets_tm
        loss = float(np.mean(resid * resid))
    if not math.isfinite(loss):
        raise DivergenceError("non-finite training loss")

    dP = resid * (2.0 / resid.size)   # (m, B, d)
    p = params.decoder
    H = p.hidden_dim
    G = GATE_COUNT[p.kind]
    dA = np.empty((m, B, G * H))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H)) if p.kind == "lstm" else None
    for t in range(m - 1, -1, -1):
        dh = dh + dP[t] @ params.w_out.T
        dh, dc = _cell_backward_step(dec_cache, t, dh, dc, dA)
        if t >= 1 and not detach_feedback:
            dx = dA[t] @ p.w_in.T
            fr = ~masks[:, t - 1:t]
            dP[t - 1] += np.where(fr, dx, 0.0)

    dec_grads = _cell_weight_grads(dec_cache, dA)

    # readout gradients (dP now includes all feedback contributions)
    dP_flat = dP.reshape(m * B, d)
    h_out_flat = dec_cache.h[1:].reshape(m * B, H)
    dw_out = h_out_flat.T @ dP_flat
    db_out = dP_flat.sum(axis=0)

    # encoder receives the gradient on its final state
    pe = params.encoder
    n = enc_cache.steps
    dA_enc = np.empty((n, B, GATE_COUNT[pe.kind] * H))
    dh_e, dc_e = dh, dc
    for t in range(n - 1, -1, -1):
        dh_e, dc_e = _cell_backward_step(enc_cache, t, dh_e, dc_e, dA_enc)
    enc_grads = _cell_weight_grads(enc_cache, dA_enc)

    grads = ModelParams(enc_grads, dec_grads, dw_out, db_out)
    gvec = grads.to_vector()
    if not np.all(np.isfinite(gvec)):
        raise DivergenceError("non-finite gradient")
    dec_norm = math.sqrt(sum(float(np.sum(a * a)) for a in dec_grads.arrays()))
    return grads, loss, dec_norm


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_init(params: ModelParams) -> AdamState:
    n = params.num_params
    return AdamState(np.zeros(n), np.zeros(n), 0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              lr: float):
    """One bias-corrected Adam update; returns (new params, new state)."""
    g = grads.to_vector()
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * (g * g)
    m_hat = m / (1.0 - ADAM_BETA1 ** t)
    v_hat = v / (1.0 - ADAM_BETA2 ** t)
    vec = params.to_vector() - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params.with_vector(vec), AdamState(m, v, t)

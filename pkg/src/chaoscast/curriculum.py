"""Teacher-forcing curricula on the training and the iteration scale.

The training scale fixes the TF ratio eps_i for epoch i via a transition
curve (constant, linear, inverse sigmoid, exponential; decreasing or the
mirrored increasing form). The iteration scale turns that ratio into a
boolean decision per decoder step: probabilistic (Bernoulli draw per
position), deterministic (TF while eps >= j/m), or sparse TF with a fixed
period derived from the system's largest Lyapunov exponent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "STRATEGIES",
    "TRANSITIONS",
    "CurriculumConfig",
    "TFMask",
    "eval_epsilon",
    "draw_decision_probabilistic",
    "decision_deterministic",
    "stf_tau",
    "build_mask",
    "build_masks",
    "prob_at_least_one_tf",
]

STRATEGIES = ("FR", "TF", "CL_CTF_P", "CL_DTF_P", "CL_DTF_D",
              "CL_ITF_P", "CL_ITF_D", "STF")
TRANSITIONS = ("linear", "inverse_sigmoid", "exponential")

# Parameter grids of the two published experiment families, kept as presets.
EXPLORATORY_GRID = {
    "CL_CTF_P": {"epsilon": (0.25, 0.5, 0.75)},
    "CL_DTF": {"transitions": TRANSITIONS,
               "eps_start": (0.25, 0.5, 0.75, 1.0), "eps_end": 0.0,
               "length": 1000},
    "CL_ITF": {"transitions": TRANSITIONS,
               "eps_start": (0.0, 0.25, 0.5, 0.75), "eps_end": 1.0,
               "length": 1000},
}
ESSENTIAL_LENGTHS = (62, 125, 250, 500, 1000, 2000, 4000, 8000, 16000, 32000)


@dataclass(frozen=True)
class TFMask:
    """Per-sequence decisions for decoder steps t = 2..m (length m-1)."""

    decisions: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.decisions, dtype=bool)
        object.__setattr__(self, "decisions", d)
        if d.ndim != 1:
            raise InvalidInputError("mask decisions must be a 1-d boolean vector")

    def __len__(self):
        return self.decisions.shape[0]


def solve_inverse_sigmoid_k(length: int) -> float:
    """Shape parameter k such that the curve closes 99% of the gap at i=length.

    Solves k / (k + e^(length/k)) = 0.01 by bisection on k >= 1.
    """
    target = 0.01

    def gap(k):
        e = length / k
        return (k / (k + math.exp(e)) if e < 700 else 0.0) - target

    lo, hi = 1.0, 2.0
    while gap(hi) < 0 and hi < 1e12:
        hi *= 2.0
    if gap(lo) >= 0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CurriculumConfig:
    """Strategy plus transition parameters, validated at construction."""

    strategy: str
    transition: str = "linear"
    eps_start: float = 0.0
    eps_end: float = 1.0
    length: int = 1000
    k: float = None          # derived from length when not given
    epsilon_const: float = 0.5
    stf_tau: int = None      # derived from the dataset LLE when not given

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(
                f"unknown strategy {self.strategy!r}; one of {', '.join(STRATEGIES)}")
        if self.strategy in ("FR", "TF", "STF", "CL_CTF_P"):
            if self.strategy == "CL_CTF_P" and not 0.0 <= self.epsilon_const <= 1.0:
                raise InvalidInputError("epsilon_const must lie in [0, 1]")
            if self.strategy == "STF" and self.stf_tau is not None \
                    and self.stf_tau < 1:
                raise InvalidInputError("stf_tau must be >= 1")
            return
        if self.transition not in TRANSITIONS:
            raise InvalidInputError(
                f"unknown transition {self.transition!r}; one of {', '.join(TRANSITIONS)}")
        for name, v in (("eps_start", self.eps_start), ("eps_end", self.eps_end)):
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        if self.length < 1:
            raise InvalidInputError("length must be >= 1")
        increasing = self.strategy.startswith("CL_ITF")
        if increasing and not self.eps_start < self.eps_end:
            raise InvalidInputError("increasing curricula need eps_start < eps_end")
        if not increasing and not self.eps_start > self.eps_end:
            raise InvalidInputError("decreasing curricula need eps_start > eps_end")
        if self.transition == "linear" and self.length > 1:
            # decreasing-core endpoint constraint, on the swapped form for ITF
            end = min(self.eps_start, self.eps_end)
            if not end < (self.length - 1) / self.length:
                raise InvalidInputError(
                    "linear transition needs its end ratio < (length-1)/length")
        if self.k is None:
            object.__setattr__(self, "k", self._derive_k())
        elif self.k <= 0 or (self.transition == "exponential" and not self.k < 1):
            raise InvalidInputError(f"invalid shape parameter k={self.k}")

    def _derive_k(self) -> float:
        if self.transition == "exponential":
            return 0.01 ** (1.0 / self.length)
        if self.transition == "inverse_sigmoid":
            return solve_inverse_sigmoid_k(self.length)
        return 1.0  # unused for linear

    @property
    def iteration_mode(self) -> str:
        if self.strategy == "STF":
            return "sparse"
        if self.strategy.endswith("_D"):
            return "deterministic"
        return "probabilistic"


def _decreasing(transition: str, start: float, end: float, length: int,
                k: float, i: int) -> float:
    if transition == "linear":
        return max(end, end + (start - end) * (1.0 - i / length))
    if transition == "inverse_sigmoid":
        e = i / k
        if e > 700:
            return end
        return end + (start - end) * k / (k + math.exp(e))
    if transition == "exponential":
        return end + (start - end) * k ** i
    raise InvalidInputError(f"unknown transition {transition!r}")


def eval_epsilon(cfg: CurriculumConfig, i: int) -> float:
    """TF ratio for epoch i under the configured training-scale curriculum."""
    if i < 0:
        raise InvalidInputError(f"epoch index must be >= 0, got {i}")
    s = cfg.strategy
    if s == "FR":
        return 0.0
    if s == "TF":
        return 1.0
    if s == "CL_CTF_P":
        return cfg.epsilon_const
    if s == "STF":
        if cfg.stf_tau is None:
            raise InvalidInputError(
                "STF period not set; derive it with stf_tau(lle, dt)")
        # nominal constant rate for logging; masks ignore it
        return 1.0 / cfg.stf_tau
    if s.startswith("CL_DTF"):
        return _decreasing(cfg.transition, cfg.eps_start, cfg.eps_end,
                           cfg.length, cfg.k, i)
    # increasing curricula mirror the decreasing curve with swapped endpoints
    dec = _decreasing(cfg.transition, cfg.eps_end, cfg.eps_start,
                      cfg.length, cfg.k, i)
    return cfg.eps_start + cfg.eps_end - dec


def draw_decision_probabilistic(epsilon: float, rng: np.random.Generator) -> bool:
    """One Bernoulli(epsilon) TF decision."""
    return bool(rng.random() < epsilon)


def decision_deterministic(epsilon: float, j: int, m: int) -> bool:
    """TF while the ratio covers position j of a length-m sequence."""
    if not 1 <= j <= m:
        raise InvalidInputError(f"position j={j} outside [1, {m}]")
    return epsilon >= j / m


def stf_tau(lle: float, dt: float) -> int:
    """Sparse-TF period in steps: ln 2 / (lle * dt), rounded half up, min 1."""
    if lle <= 0 or dt <= 0:
        raise InvalidInputError("stf_tau needs positive lle and dt")
    return max(1, int(math.floor(math.log(2.0) / (lle * dt) + 0.5)))


def _sparse_pattern(m: int, tau: int) -> np.ndarray:
    js = np.arange(2, m + 1)
    return js % tau == 0


def build_mask(cfg: CurriculumConfig, epsilon: float, m: int,
               rng: np.random.Generator = None, mode: str = None) -> TFMask:
    """Decisions for decoder steps 2..m of one sequence."""
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    mode = mode or cfg.iteration_mode
    if mode == "probabilistic":
        if rng is None:
            raise InvalidInputError("probabilistic masks need an rng")
        return TFMask(rng.random(m - 1) < epsilon)
    if mode == "deterministic":
        js = np.arange(2, m + 1)
        return TFMask(epsilon >= js / m)
    if mode == "sparse":
        if cfg.stf_tau is None:
            raise InvalidInputError(
                "STF period not set; derive it with stf_tau(lle, dt)")
        return TFMask(_sparse_pattern(m, cfg.stf_tau))
    raise InvalidInputError(f"unknown iteration mode {mode!r}")


def build_masks(cfg: CurriculumConfig, epsilon: float, m: int, batch: int,
                rng: np.random.Generator = None) -> np.ndarray:
    """Batch of per-sequence masks, shape (batch, m-1).

    Probabilistic decisions are drawn independently per sequence and
    position; deterministic and sparse patterns are shared by the batch.
    """
    mode = cfg.iteration_mode
    if mode == "probabilistic":
        if rng is None:
            raise InvalidInputError("probabilistic masks need an rng")
        return rng.random((batch, m - 1)) < epsilon
    one = build_mask(cfg, epsilon, m, rng, mode).decisions
    return np.broadcast_to(one, (batch, m - 1)).copy()


def prob_at_least_one_tf(epsilon: float, m: int) -> float:
    """Probability that a length-m probabilistic mask contains a TF step."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError("epsilon must lie in [0, 1]")
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    return 1.0 - (1.0 - epsilon) ** m

"""Chaotic benchmark systems: definitions, integration, Lyapunov estimation.

Seven presets are registered (six chaotic systems plus a periodic
parametrization of the Thomas attractor). ODEs are integrated with
fixed-step classic Runge-Kutta; the one delay system (Mackey-Glass) uses
the method of steps with cubic Hermite interpolation into the stored
solution. A Benettin two-trajectory estimator recovers the largest
Lyapunov exponent for validation against published values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidInputError

__all__ = [
    "SystemSpec",
    "Trajectory",
    "PRESETS",
    "get_system",
    "eval_derivative",
    "integrate_ode",
    "integrate_dde",
    "estimate_lle",
]


@dataclass(frozen=True)
class SystemSpec:
    """A named dynamical system and its sampling configuration.

    ``lle`` is the published largest Lyapunov exponent (1/time units);
    it is NaN for systems where no reference value applies (e.g. the
    periodic Thomas parametrization).
    """

    name: str
    dim: int
    params: dict = field(default_factory=dict)
    dt: float = 0.01
    lle: float = float("nan")
    kind: str = "ode"  # "ode" | "dde"
    default_x0: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidInputError(f"dim must be >= 1, got {self.dim}")
        if self.dt <= 0:
            raise InvalidInputError(f"dt must be > 0, got {self.dt}")
        if self.kind not in ("ode", "dde"):
            raise InvalidInputError(f"kind must be 'ode' or 'dde', got {self.kind!r}")

    def with_params(self, **overrides) -> "SystemSpec":
        merged = dict(self.params)
        merged.update(overrides)
        return SystemSpec(self.name, self.dim, merged, self.dt, self.lle,
                          self.kind, self.default_x0)


@dataclass
class Trajectory:
    """Sampled raw (unnormalized) states of one integration run."""

    values: np.ndarray  # (steps, d)
    dt: float
    t0_skipped: int = 0

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise InvalidInputError("trajectory must be a non-empty (steps, d) matrix")
        if not np.all(np.isfinite(self.values)):
            raise DivergenceError("trajectory contains non-finite values")


# ---------------------------------------------------------------------------
# Derivative rules. Each rule accepts states of shape (..., d) so that
# integrators can propagate several trajectories (e.g. the Benettin pair)
# in one call.

def _lorenz(x, p):
    s, r, b = p["sigma"], p["rho"], p["beta"]
    dx = np.empty_like(x)
    dx[..., 0] = -s * x[..., 0] + s * x[..., 1]
    dx[..., 1] = -x[..., 0] * x[..., 2] + r * x[..., 0] - x[..., 1]
    dx[..., 2] = x[..., 0] * x[..., 1] - b * x[..., 2]
    return dx


def _thomas(x, p):
    b = p["b"]
    dx = np.empty_like(x)
    dx[..., 0] = np.sin(x[..., 1]) - b * x[..., 0]
    dx[..., 1] = np.sin(x[..., 2]) - b * x[..., 1]
    dx[..., 2] = np.sin(x[..., 0]) - b * x[..., 2]
    return dx


def _roessler(x, p):
    a, b, c = p["a"], p["b"], p["c"]
    dx = np.empty_like(x)
    dx[..., 0] = -(x[..., 1] + x[..., 2])
    dx[..., 1] = x[..., 0] + a * x[..., 1]
    dx[..., 2] = b + x[..., 2] * (x[..., 0] - c)
    return dx


def _hyperroessler(x, p):
    a, b, c, d = p["a"], p["b"], p["c"], p["d"]
    dx = np.empty_like(x)
    dx[..., 0] = -x[..., 1] - x[..., 2]
    dx[..., 1] = x[..., 0] + a * x[..., 1] + x[..., 3]
    dx[..., 2] = b + x[..., 0] * x[..., 2]
    dx[..., 3] = -c * x[..., 2] + d * x[..., 3]
    return dx


def _lorenz96(x, p):
    F = p["F"]
    xm1 = np.roll(x, 1, axis=-1)
    xm2 = np.roll(x, 2, axis=-1)
    xp1 = np.roll(x, -1, axis=-1)
    return (xp1 - xm2) * xm1 - x + F


def _mackey_glass(x, p, x_delayed):
    beta, gamma, n = p["beta"], p["gamma"], p["n_mg"]
    return beta * x_delayed / (1.0 + x_delayed ** n) - gamma * x


def _linear_decay(x, p):
    return -p.get("rate", 1.0) * x


_ODE_RULES = {
    "lorenz": _lorenz,
    "thomas": _thomas,
    "thomas-periodic": _thomas,
    "roessler": _roessler,
    "hyperroessler": _hyperroessler,
    "lorenz96": _lorenz96,
    "linear-decay": _linear_decay,
}


def _make_presets():
    l96_x0 = tuple([8.0] * 40)
    presets = {
        "mackey-glass": SystemSpec(
            "mackey-glass", 1,
            {"beta": 0.2, "gamma": 0.1, "n_mg": 10.0, "tau_delay": 17.0},
            dt=1.0, lle=0.006, kind="dde", default_x0=(1.2,)),
        "thomas": SystemSpec(
            "thomas", 3, {"b": 0.1}, dt=0.1, lle=0.055,
            default_x0=(0.1, 0.0, -0.1)),
        "thomas-periodic": SystemSpec(
            "thomas-periodic", 3, {"b": 0.32899}, dt=0.1, lle=float("nan"),
            default_x0=(0.1, 0.0, -0.1)),
        "roessler": SystemSpec(
            "roessler", 3, {"a": 0.2, "b": 0.2, "c": 5.7}, dt=0.12, lle=0.069,
            default_x0=(1.0, 1.0, 1.0)),
        "hyperroessler": SystemSpec(
            "hyperroessler", 4, {"a": 0.25, "b": 3.0, "c": 0.5, "d": 0.05},
            dt=0.1, lle=0.14, default_x0=(-10.0, -6.0, 0.0, 10.0)),
        "lorenz": SystemSpec(
            "lorenz", 3, {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
            dt=0.01, lle=0.905, default_x0=(1.0, 1.0, 1.0)),
        "lorenz96": SystemSpec(
            "lorenz96", 40, {"F": 8.0}, dt=0.05, lle=1.67, default_x0=l96_x0),
        # Validation-only system with a known exponent; not a paper system.
        "linear-decay": SystemSpec(
            "linear-decay", 1, {"rate": 1.0}, dt=0.1, lle=-1.0,
            default_x0=(1.0,)),
    }
    return presets


PRESETS = _make_presets()

# Presets addressable from the CLI (the validation system is internal).
CLI_SYSTEMS = ("lorenz", "lorenz96", "thomas", "thomas-periodic",
               "roessler", "hyperroessler", "mackey-glass")


def get_system(name: str, **param_overrides) -> SystemSpec:
    """Look up a preset by name, optionally overriding parameters."""
    try:
        spec = PRESETS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown system {name!r}; available presets: {', '.join(CLI_SYSTEMS)}"
        ) from None
    if param_overrides:
        spec = spec.with_params(**param_overrides)
    return spec


def default_x0(spec: SystemSpec) -> np.ndarray:
    x0 = np.array(spec.default_x0, dtype=float)
    if spec.name == "lorenz96":
        # (F, ..., F) is an equilibrium; nudge one coordinate off it.
        x0 = np.full(spec.dim, spec.params["F"])
        x0[0] += 0.01
    return x0


def eval_derivative(spec: SystemSpec, state, delayed_state=None) -> np.ndarray:
    """Evaluate dx/dt at ``state`` (and ``delayed_state`` for the DDE)."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != spec.dim:
        raise InvalidInputError(
            f"state has dimension {state.shape[-1]}, expected {spec.dim}")
    if spec.kind == "dde":
        if delayed_state is None:
            raise InvalidInputError(f"{spec.name} is a DDE; delayed_state is required")
        delayed_state = np.asarray(delayed_state, dtype=float)
        return _mackey_glass(state, spec.params, delayed_state)
    if delayed_state is not None:
        raise InvalidInputError(f"{spec.name} is an ODE; delayed_state must be None")
    return _ODE_RULES[spec.name](state, spec.params)


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_ode(spec: SystemSpec, x0, n_steps: int, substeps: int = 10) -> Trajectory:
    """Integrate an ODE preset, sampling every ``dt``.

    Classic RK4 with internal step h = dt/substeps; fixed-step, so the
    first k samples of a long run equal a k-step run bit for bit.
    """
    if spec.kind != "ode":
        raise InvalidInputError(f"{spec.name} is not an ODE")
    if substeps < 1:
        raise InvalidInputError("substeps must be >= 1")
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape[-1] != spec.dim:
        raise InvalidInputError(f"x0 has dimension {x.shape[-1]}, expected {spec.dim}")
    rule = _ODE_RULES[spec.name]
    p = spec.params
    f = lambda s: rule(s, p)
    h = spec.dt / substeps
    out = np.empty((n_steps,) + x.shape, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            for _ in range(substeps):
                x = _rk4_step(f, x, h)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(
                    f"{spec.name} diverged at sampled step {i}", step=i)
            out[i] = x
    return Trajectory(out, spec.dt)


def _hermite(x0, f0, x1, f1, h, theta):
    """Cubic Hermite value at fraction theta of an interval of width h."""
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + theta
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1


def integrate_dde(spec: SystemSpec, history, n_steps: int, substeps: int = 10) -> Trajectory:
    """Integrate the delay system by the method of steps.

    ``history`` is the constant state for t <= 0. Delayed values inside a
    Runge-Kutta step come from cubic Hermite interpolation over the
    stored (state, derivative) grid.
    """
    if spec.kind != "dde":
        raise InvalidInputError(f"{spec.name} is not a DDE")
    if substeps < 1:
        raise InvalidInputError("substeps must be >= 1")
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    hist = np.asarray(history, dtype=float).reshape(-1)
    if hist.shape[0] != spec.dim:
        raise InvalidInputError(
            f"history has dimension {hist.shape[0]}, expected {spec.dim}")
    p = spec.params
    tau = p["tau_delay"]
    h = spec.dt / substeps
    n_inner = n_steps * substeps
    # delay measured in internal steps; +2 slack for interpolation brackets
    lag = tau / h
    n_pre = int(math.ceil(lag)) + 2

    d = spec.dim
    xs = np.empty((n_pre + n_inner + 1, d), dtype=float)
    fs = np.empty_like(xs)
    xs[: n_pre + 1] = hist  # constant history up to and including t = 0
    fs[: n_pre + 1] = 0.0   # constant history has zero slope

    def delayed(idx_now, offset):
        """State at time (idx_now + offset)*h - tau, offset in [0, 1]."""
        u = idx_now + offset - lag
        j = int(math.floor(u))
        theta = u - j
        if theta == 0.0:
            return xs[j]
        return _hermite(xs[j], fs[j], xs[j + 1], fs[j + 1], h, theta)

    def f(x, x_tau):
        return _mackey_glass(x, p, x_tau)

    out = np.empty((n_steps, d), dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_inner):
            idx = n_pre + i
            x = xs[idx]
            k1 = f(x, delayed(idx, 0.0))
            k2 = f(x + 0.5 * h * k1, delayed(idx, 0.5))
            k3 = f(x + 0.5 * h * k2, delayed(idx, 0.5))
            k4 = f(x + h * k3, delayed(idx, 1.0))
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            xs[idx + 1] = x_new
            fs[idx + 1] = f(x_new, delayed(idx + 1, 0.0))
            if (i + 1) % substeps == 0:
                k = (i + 1) // substeps - 1
                if not np.all(np.isfinite(x_new)):
                    raise DivergenceError(
                        f"{spec.name} diverged at sampled step {k}", step=k)
                out[k] = x_new
    return Trajectory(out, spec.dt)


def integrate(spec: SystemSpec, x0, n_steps: int, substeps: int = 10) -> Trajectory:
    """Dispatch to the ODE or DDE integrator based on the system kind."""
    if spec.kind == "dde":
        return integrate_dde(spec, x0, n_steps, substeps)
    return integrate_ode(spec, x0, n_steps, substeps)


def estimate_lle(spec: SystemSpec, x0=None, renorm_interval: int = 10,
                 total_steps: int = 30000, substeps: int = 5,
                 transient_steps: int = 1000, d0: float = 1e-8) -> float:
    """Benettin two-trajectory estimate of the largest Lyapunov exponent.

    A reference and a perturbed trajectory are advanced together; every
    ``renorm_interval`` sampled steps the separation is renormalized to
    ``d0`` and its log growth accumulated. The average growth rate per
    unit time is the estimate. The initial ``transient_steps`` samples
    are integrated (reference only) and discarded so the estimate is
    taken on the attractor.
    """
    if spec.kind != "ode":
        raise InvalidInputError("LLE estimation supports ODE systems only")
    if total_steps < 10 * renorm_interval:
        raise InvalidInputError("total_steps must be >> renorm_interval")
    if x0 is None:
        x0 = default_x0(spec)
    x0 = np.asarray(x0, dtype=float)
    if transient_steps > 0:
        traj = integrate_ode(spec, x0, transient_steps, substeps)
        x0 = traj.values[-1]

    rule = _ODE_RULES[spec.name]
    p = spec.params
    f = lambda s: rule(s, p)
    h = spec.dt / substeps

    pair = np.stack([x0, x0])
    pair[1, 0] += d0
    log_sum = 0.0
    n_blocks = total_steps // renorm_interval
    for _ in range(n_blocks):
        for _ in range(renorm_interval * substeps):
            pair = _rk4_step(f, pair, h)
        if not np.all(np.isfinite(pair)):
            raise DivergenceError(f"{spec.name} diverged during LLE estimation")
        delta = pair[1] - pair[0]
        dist = float(np.linalg.norm(delta))
        if dist == 0.0:
            raise DivergenceError("trajectories collapsed; cannot renormalize")
        log_sum += math.log(dist / d0)
        pair[1] = pair[0] + delta * (d0 / dist)
    elapsed = n_blocks * renorm_interval * spec.dt
    return log_sum / elapsed

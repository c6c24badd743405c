import numpy as np
import pytest

from chaoscast import dataio, nn


def finite_difference_grad(params, inputs, targets, masks, step=1e-5):
    """Central-difference loss gradient; independent of the backward pass."""
    vec = params.to_vector()
    grad = np.empty_like(vec)
    for i in range(vec.size):
        plus = vec.copy()
        plus[i] += step
        minus = vec.copy()
        minus[i] -= step
        lp = nn.forward_loss(params.with_vector(plus), inputs, targets, masks)
        lm = nn.forward_loss(params.with_vector(minus), inputs, targets, masks)
        grad[i] = (lp - lm) / (2 * step)
    return grad


def max_rel_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return float(np.max(np.abs(analytic - numeric) / denom))


def make_wave_dataset(steps=600, d=2, dt=0.1, lle=1.0, seed=0):
    """Small smooth multivariate series for fast trainer/metric tests."""
    rng = np.random.default_rng(seed)
    t = np.arange(steps) * dt
    cols = []
    for j in range(d):
        phase = rng.uniform(0, 2 * np.pi)
        freq = 0.7 + 0.3 * j
        cols.append(np.sin(freq * t + phase) + 0.3 * np.sin(2.3 * freq * t))
    raw = np.stack(cols, axis=1)
    return dataio.dataset_from_array(raw, dt=dt, lle=lle)


@pytest.fixture
def wave_dataset():
    return make_wave_dataset()

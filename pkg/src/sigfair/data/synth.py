"""Synthetic two-group data with a planted demographic disparity."""

from dataclasses import dataclass

import numpy as np

from ..numerics.ops import sigmoid
from .dataset import Dataset


@dataclass(frozen=True)
class SynthSpec:
    n: int = 8000
    d: int = 4
    delta: float = 1.0
    w: tuple = None
    b_s: float = 1.0
    seed: int = 0
    mc_draws: int = 10 ** 6

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if self.w is not None and len(self.w) != self.d:
            raise ValueError(f"w has length {len(self.w)}, expected d={self.d}")

    @property
    def weights(self):
        return np.ones(self.d) if self.w is None else np.asarray(self.w, dtype=np.float64)


def _draw(spec, n, rng):
    s = (rng.random(n) < 0.5).astype(np.int8)
    X = rng.standard_normal((n, spec.d)) + spec.delta * s[:, None]
    score = X @ spec.weights + spec.b_s * s
    return X, s, score


def generate_synthetic(spec):
    """Sample ``s ~ Bern(1/2)``, ``x | s ~ N(delta*s*1, I)``, ``y ~ Bern(sigmoid(w.x + b_s*s))``.

    Returns the dataset and a ground-truth record for the Bayes rule
    ``1[w.x + b_s*s > 0]``, estimated on ``spec.mc_draws`` fresh draws from
    an independent stream.
    """
    rng = np.random.default_rng(spec.seed)
    X, s, score = _draw(spec, spec.n, rng)
    y = (rng.random(spec.n) < sigmoid(score)).astype(np.int8)
    data = Dataset(X=X, s=s, y=y, feature_names=[f"x{j}" for j in range(spec.d)])

    mc = np.random.default_rng([spec.seed, 1])
    pos = np.zeros(2)
    cnt = np.zeros(2)
    correct = 0.0
    base = np.zeros(2)
    chunk = 200_000
    left = spec.mc_draws
    while left > 0:
        k = min(chunk, left)
        _, s_mc, score_mc = _draw(spec, k, mc)
        p = sigmoid(score_mc)
        pred = score_mc > 0
        for g in (0, 1):
            sel = s_mc == g
            pos[g] += pred[sel].sum()
            cnt[g] += sel.sum()
            base[g] += p[sel].sum()
        correct += np.maximum(p, 1.0 - p).sum()
        left -= k
    rate = pos / cnt
    truth = {
        "bayes_delta_dp": float(abs(rate[0] - rate[1])),
        "bayes_positive_rate": rate.tolist(),
        "bayes_accuracy": float(correct / spec.mc_draws),
        "label_base_rate": (base / cnt).tolist(),
        "mc_draws": int(spec.mc_draws),
    }
    return data, truth

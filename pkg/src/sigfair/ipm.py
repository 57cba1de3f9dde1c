"""Sigmoid-discriminator deviance between two groups of representations.

The discriminator family is ``z -> sigmoid(theta @ z + mu)``.  For two
samples the deviance is the largest absolute difference of group means
that a member of the family can produce.  This module provides

* the mini-batch gap for a fixed discriminator (the training fair loss),
* projected gradient ascent on that gap (the adversary's inner loop),
* a multi-restart ascent estimate of the supremum, and
* an exhaustive grid maximizer used as an independent oracle.
"""

from dataclasses import dataclass

import numpy as np

from .numerics.ops import as_matrix, sigmoid

TARGETS = ("DP", "EOpp", "EO")


class EmptyGroup(ValueError):
    """Raised when one side of a grouped batch has no rows."""


class DimensionTooLarge(ValueError):
    pass


@dataclass
class Discriminator:
    theta: np.ndarray
    mu: float

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        self.mu = float(self.mu)
        if not (np.all(np.isfinite(self.theta)) and np.isfinite(self.mu)):
            raise ValueError("discriminator parameters must be finite")

    @classmethod
    def random(cls, m, rng):
        """Draw ``theta ~ U(-1, 1)^m`` and ``mu ~ U(-1, 1)``."""
        theta = rng.uniform(-1.0, 1.0, size=m)
        mu = rng.uniform(-1.0, 1.0)
        return cls(theta, mu)

    def negated(self):
        return Discriminator(-self.theta, -self.mu)

    def copy(self):
        return Discriminator(self.theta.copy(), self.mu)


@dataclass
class GroupedBatch:
    z0: np.ndarray
    z1: np.ndarray

    def __post_init__(self):
        self.z0 = as_matrix(self.z0)
        self.z1 = as_matrix(self.z1)
        if self.z0.shape[1] != self.z1.shape[1]:
            raise ValueError(
                f"group column counts differ: {self.z0.shape[1]} vs {self.z1.shape[1]}")

    @property
    def m(self):
        return self.z0.shape[1]

    def require_nonempty(self):
        if len(self.z0) == 0 or len(self.z1) == 0:
            raise EmptyGroup(f"group sizes {len(self.z0)} and {len(self.z1)}")

    def swapped(self):
        return GroupedBatch(self.z1, self.z0)


def _signed_gaps(thetas, mus, z0, z1):
    """Mean-sigmoid differences for a stack of ``R`` discriminators.

    Returns ``(diff, s0, s1)`` with ``diff`` of shape ``(R,)`` and the
    per-sample sigmoid activations of shape ``(n_g, R)``.
    """
    s0 = sigmoid(z0 @ thetas.T + mus)
    s1 = sigmoid(z1 @ thetas.T + mus)
    return s0.mean(axis=0) - s1.mean(axis=0), s0, s1


def _gap_and_grad(thetas, mus, z0, z1):
    diff, s0, s1 = _signed_gaps(thetas, mus, z0, z1)
    d0 = s0 * (1.0 - s0)
    d1 = s1 * (1.0 - s1)
    sign = np.sign(diff)
    g_theta = sign[:, None] * (d0.T @ z0 / len(z0) - d1.T @ z1 / len(z1))
    g_mu = sign * (d0.mean(axis=0) - d1.mean(axis=0))
    return np.abs(diff), g_theta, g_mu


def fair_gap(disc, batch):
    """``|mean_0 sigmoid(theta.z + mu) - mean_1 sigmoid(theta.z + mu)|``."""
    batch.require_nonempty()
    diff, _, _ = _signed_gaps(disc.theta[None, :], np.array([disc.mu]), batch.z0, batch.z1)
    return float(abs(diff[0]))


def fair_gap_grad(disc, batch):
    """Gap together with its gradient in ``(theta, mu)``.

    At a tie between the group means the subgradient 0 is returned.
    """
    batch.require_nonempty()
    gap, g_theta, g_mu = _gap_and_grad(
        disc.theta[None, :], np.array([disc.mu]), batch.z0, batch.z1)
    return float(gap[0]), g_theta[0], float(g_mu[0])


def _ascend_many(thetas, mus, z0, z1, lr_adv, steps, track_best=False):
    best = None
    for _ in range(steps):
        gap, g_theta, g_mu = _gap_and_grad(thetas, mus, z0, z1)
        if track_best:
            best = gap if best is None else np.maximum(best, gap)
        thetas = thetas + lr_adv * g_theta
        mus = mus + lr_adv * g_mu
    return thetas, mus, best


def ascend(disc, batch, lr_adv, steps):
    """Run ``steps`` plain gradient-ascent updates of the gap in ``(theta, mu)``."""
    batch.require_nonempty()
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    thetas, mus, _ = _ascend_many(disc.theta[None, :].copy(), np.array([disc.mu]),
                                  batch.z0, batch.z1, lr_adv, steps)
    return Discriminator(thetas[0], mus[0])


def _anchored_inits(zz, restarts, seed, max_sharpness):
    m = zz.shape[1]
    thetas = np.empty((restarts, m))
    mus = np.empty(restarts)
    for k in range(restarts):
        rng = np.random.default_rng([seed, k])
        u = rng.standard_normal(m)
        u /= np.linalg.norm(u)
        thetas[k] = u * rng.uniform(0.5, max_sharpness)
        mus[k] = -thetas[k] @ zz[rng.integers(len(zz))]
    return thetas, mus


def _adam_ascend_many(thetas, mus, z0, z1, lr, steps, beta1=0.9, beta2=0.999, eps=1e-12):
    m = thetas.shape[1]
    params = np.hstack([thetas, mus[:, None]])
    m1 = np.zeros_like(params)
    m2 = np.zeros_like(params)
    best = np.zeros(len(params))
    for t in range(1, steps + 1):
        gap, g_theta, g_mu = _gap_and_grad(params[:, :m], params[:, m], z0, z1)
        best = np.maximum(best, gap)
        g = np.hstack([g_theta, g_mu[:, None]])
        m1 = beta1 * m1 + (1.0 - beta1) * g
        m2 = beta2 * m2 + (1.0 - beta2) * g * g
        params = params + lr * (m1 / (1.0 - beta1 ** t)) / (np.sqrt(m2 / (1.0 - beta2 ** t)) + eps)
    return params[:, :m], params[:, m], best


def estimate_sipm(batch, restarts=16, lr_adv=1.0, steps=200, seed=0, method="adam",
                  max_sharpness=8.0):
    """Lower bound on the sigmoid deviance from multi-start gradient ascent.

    The pooled sample is standardized per coordinate first; the deviance is
    unchanged by invertible affine maps of ``z``, and this makes the step
    size independent of the representation's scale.  Restart ``k`` starts
    from its own stream ``default_rng([seed, k])`` with a random direction,
    a sharpness drawn from ``U(0.5, max_sharpness)`` and the decision
    boundary through a randomly chosen pooled sample, so raising
    ``restarts`` only adds trajectories.

    Rows are put in a canonical order first, so two groups holding the same
    multiset of rows give exactly zero.

    ``method="adam"`` uses bias-corrected adaptive ascent steps;
    ``method="gd"`` uses the plain steps of :func:`ascend`.  The result is
    the largest gap seen anywhere along any trajectory.
    """
    batch.require_nonempty()
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if method not in ("adam", "gd"):
        raise ValueError(f"unknown ascent method {method!r}")
    # rows in lexicographic order so equal multisets sum in the same order
    z0 = batch.z0[np.lexsort(batch.z0.T[::-1])]
    z1 = batch.z1[np.lexsort(batch.z1.T[::-1])]
    pooled = np.vstack([z0, z1])
    center = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    scale[scale == 0] = 1.0
    z0 = (z0 - center) / scale
    z1 = (z1 - center) / scale
    thetas, mus = _anchored_inits(np.vstack([z0, z1]), restarts, seed, max_sharpness)
    if method == "adam":
        thetas, mus, best = _adam_ascend_many(thetas, mus, z0, z1, lr_adv, steps)
    else:
        thetas, mus, best = _ascend_many(thetas, mus, z0, z1, lr_adv, steps, track_best=True)
    final = np.abs(_signed_gaps(thetas, mus, z0, z1)[0])
    if best is not None:
        final = np.maximum(final, best)
    return float(final.max())


# --- exhaustive grid oracle -------------------------------------------------

_ORACLE_TOL = 1e-12
_CHUNK = 4096


def _grid_points_value(points, z0, z1, m):
    """Gap at each row of ``points`` (columns: theta_1..theta_m, mu)."""
    diff, _, _ = _signed_gaps(points[:, :m], points[:, m], z0, z1)
    return np.abs(diff)


def _box_upper_bound(lo, hi, z0, z1, m):
    """Upper bound of the gap over each axis-aligned parameter box.

    ``theta @ z + mu`` ranges over an interval on a box; the sigmoid is
    increasing, so each group mean is bracketed by its values at the ends.
    """
    def bracket(z):
        a = z[None, :, :] * lo[:, None, :m]
        b = z[None, :, :] * hi[:, None, :m]
        low = np.minimum(a, b).sum(axis=2) + lo[:, None, m]
        high = np.maximum(a, b).sum(axis=2) + hi[:, None, m]
        return sigmoid(low).mean(axis=1), sigmoid(high).mean(axis=1)

    low0, high0 = bracket(z0)
    low1, high1 = bracket(z1)
    return np.maximum(high0 - low1, high1 - low0)


def _same_multiset(a, b):
    if a.shape != b.shape:
        return False
    return np.array_equal(a[np.lexsort(a.T[::-1])], b[np.lexsort(b.T[::-1])])


def grid_oracle_sipm(batch, theta_range=(-20.0, 20.0), theta_steps=801,
                     mu_range=(-20.0, 20.0), mu_steps=801):
    """Maximum of the gap over the full Cartesian grid of ``(theta, mu)``.

    Every coordinate of ``theta`` takes ``theta_steps`` evenly spaced values
    in ``theta_range``; ``mu`` likewise.  The maximum is found by
    branch-and-bound over index boxes: a box is discarded only when its
    interval bound cannot beat the best grid value found so far by more
    than 1e-12, so the result equals the brute-force grid maximum to that
    tolerance while visiting far fewer points.
    """
    batch.require_nonempty()
    m = batch.m
    if m > 3:
        raise DimensionTooLarge(f"grid oracle supports m <= 3, got m={m}")
    z0, z1 = batch.z0, batch.z1
    if _same_multiset(z0, z1):
        # identical multisets: every discriminator gives exactly zero
        return 0.0
    axes = [np.linspace(theta_range[0], theta_range[1], theta_steps)] * m
    axes.append(np.linspace(mu_range[0], mu_range[1], mu_steps))
    sizes = np.array([len(a) for a in axes])
    D = m + 1

    def coords(idx):
        return np.stack([axes[j][idx[:, j]] for j in range(D)], axis=1)

    # seed the incumbent from a coarse sub-grid
    stride = max(1, int(np.ceil((np.prod(sizes) / 20000.0) ** (1.0 / D))))
    sub = [np.unique(np.r_[np.arange(0, s, stride), s - 1]) for s in sizes]
    mesh = np.stack(np.meshgrid(*sub, indexing="ij"), axis=-1).reshape(-1, D)
    best = 0.0
    for start in range(0, len(mesh), _CHUNK):
        best = max(best, float(_grid_points_value(coords(mesh[start:start + _CHUNK]), z0, z1, m).max()))

    stack = [(np.zeros((1, D), dtype=np.int64), (sizes - 1)[None, :].astype(np.int64))]
    while stack:
        lo_idx, hi_idx = stack.pop()
        lo, hi = coords(lo_idx), coords(hi_idx)
        best = max(best, float(_grid_points_value(lo, z0, z1, m).max()))
        ub = _box_upper_bound(lo, hi, z0, z1, m)
        point = np.all(lo_idx == hi_idx, axis=1)
        if point.any():
            best = max(best, float(ub[point].max()))
        keep = (ub > best + _ORACLE_TOL) & ~point
        lo_idx, hi_idx = lo_idx[keep], hi_idx[keep]
        if len(lo_idx) == 0:
            continue
        width = hi_idx - lo_idx
        dim = np.argmax(width, axis=1)
        rows = np.arange(len(lo_idx))
        mid = (lo_idx[rows, dim] + hi_idx[rows, dim]) // 2
        left_hi = hi_idx.copy()
        left_hi[rows, dim] = mid
        right_lo = lo_idx.copy()
        right_lo[rows, dim] = mid + 1
        new_lo = np.concatenate([lo_idx, right_lo])
        new_hi = np.concatenate([left_hi, hi_idx])
        # most promising boxes are explored first (pushed last)
        for start in range(0, len(new_lo), _CHUNK):
            stack.append((new_lo[start:start + _CHUNK], new_hi[start:start + _CHUNK]))
    return best


def grid_bruteforce_sipm(batch, theta_range=(-20.0, 20.0), theta_steps=81,
                         mu_range=(-20.0, 20.0), mu_steps=81):
    """Evaluate every grid point directly; only for small grids."""
    batch.require_nonempty()
    m = batch.m
    if m > 3:
        raise DimensionTooLarge(f"grid oracle supports m <= 3, got m={m}")
    axes = [np.linspace(theta_range[0], theta_range[1], theta_steps)] * m
    axes.append(np.linspace(mu_range[0], mu_range[1], mu_steps))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m + 1)
    best = 0.0
    for start in range(0, len(mesh), _CHUNK):
        best = max(best, float(_grid_points_value(mesh[start:start + _CHUNK], batch.z0, batch.z1, m).max()))
    return best


# --- conditioning for equal opportunity / equalized odds --------------------

def conditional_masks(s, y, target):
    """Row masks ``(group0, group1)`` for each stratum the target compares."""
    s = np.asarray(s).reshape(-1)
    if target not in TARGETS:
        raise ValueError(f"unknown fairness target {target!r}; choose from {TARGETS}")
    if target == "DP":
        return [(s == 0, s == 1)]
    y = np.asarray(y).reshape(-1)
    if y.shape != s.shape:
        raise ValueError(f"s and y lengths differ: {s.shape} vs {y.shape}")
    strata = (0,) if target == "EOpp" else (0, 1)
    return [((s == 0) & (y == k), (s == 1) & (y == k)) for k in strata]


def conditional_batches(Z, s, y, target):
    Z = as_matrix(Z)
    if len(np.asarray(s).reshape(-1)) != len(Z):
        raise ValueError("Z and s lengths differ")
    return [GroupedBatch(Z[g0], Z[g1]) for g0, g1 in conditional_masks(s, y, target)]

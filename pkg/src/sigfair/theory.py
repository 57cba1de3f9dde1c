"""Executable checks of the moment-witness constructions and deviance surrogates.

A moment witness writes a monomial as a signed combination of powers of
linear projections, e.g. ``x*y = -(x - y)**2/4 + (x + y)**2/4``.  The
univariate construction uses the evenly spaced nodes ``lambda_i = -1 + 2i/r``;
the multivariate one composes univariate witnesses coordinate by coordinate.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .ipm import EmptyGroup, GroupedBatch, estimate_sipm, grid_oracle_sipm

MAX_UNIVARIATE_DEGREE = 12
MAX_MULTI_DEGREE = 8
MAX_MULTI_DIM = 4


class DegreeTooLarge(ValueError):
    pass


@dataclass
class MomentWitness:
    r1: int
    r2: int
    lambdas: np.ndarray
    betas: np.ndarray
    verified: bool = True

    @property
    def r(self):
        return self.r1 + self.r2

    def evaluate(self, x, y):
        """``sum_i beta_i (x + lambda_i y)^r`` at arrays ``x``, ``y``."""
        x = np.asarray(x, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        return np.sum(self.betas * (x + self.lambdas * y) ** self.r, axis=-1)


@dataclass
class MultiWitness:
    exponents: tuple
    betas: np.ndarray
    directions: np.ndarray
    verified: bool = True

    @property
    def u(self):
        return len(self.exponents)

    @property
    def r(self):
        return int(sum(self.exponents))

    def evaluate(self, Z):
        """``sum_k beta_k (a_k . z)^r`` for each row ``z`` of ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        return (Z @ self.directions.T) ** self.r @ self.betas


def _elementary_symmetric(values, k):
    # e[j] after processing a prefix holds e_j of that prefix
    e = np.zeros(k + 1)
    e[0] = 1.0
    for v in values:
        e[1:] = e[1:] + v * e[:-1]
    return e[k]


def vandermonde_witness(r1, r2, allow_unverified=False):
    """Closed-form ``beta`` with ``sum_i beta_i (x + lambda_i y)^r = x^r1 y^r2``.

    ``beta_i = (-1)^r1 e_r1(lambda without i) / (C(r, r2) prod_{j != i}(lambda_i - lambda_j))``
    where ``e_k`` is the k-th elementary symmetric polynomial.  Degrees above
    12 raise unless ``allow_unverified``, in which case the witness is
    returned with ``verified=False``.
    """
    if r1 < 1 or r2 < 1:
        raise ValueError("both exponents must be at least 1")
    r = r1 + r2
    verified = r <= MAX_UNIVARIATE_DEGREE
    if not verified and not allow_unverified:
        raise DegreeTooLarge(f"degree {r} exceeds {MAX_UNIVARIATE_DEGREE}")
    lambdas = -1.0 + 2.0 * np.arange(r + 1) / r
    betas = np.empty(r + 1)
    scale = math.comb(r, r2)
    for i in range(r + 1):
        others = np.delete(lambdas, i)
        betas[i] = ((-1) ** r1 * _elementary_symmetric(others, r1)
                    / (scale * np.prod(lambdas[i] - others)))
    return MomentWitness(r1, r2, lambdas, betas, verified)


def multivariate_witness(exponents, allow_unverified=False):
    """Witness for ``prod_j z_j^{r_j}`` with every direction in ``[-1, 1]^u``.

    Built inductively: if ``sum_i b_i (a_i . z')^{r'}`` equals the monomial
    in the first ``u - 1`` coordinates, then multiplying by ``z_u^{r_u}`` and
    applying the univariate witness for ``(r', r_u)`` to each term gives
    directions ``(a_i, lambda_k)`` with coefficients ``b_i * beta_k``.
    """
    exps = tuple(int(e) for e in exponents)
    if not exps or any(e < 1 for e in exps):
        raise ValueError("need at least one exponent, each at least 1")
    verified = len(exps) <= MAX_MULTI_DIM and sum(exps) <= MAX_MULTI_DEGREE
    if not verified and not allow_unverified:
        raise DegreeTooLarge(
            f"u={len(exps)}, r={sum(exps)} exceeds u<={MAX_MULTI_DIM}, r<={MAX_MULTI_DEGREE}")
    betas = np.array([1.0])
    dirs = np.ones((1, 1))
    partial = exps[0]
    for r_next in exps[1:]:
        w = vandermonde_witness(partial, r_next, allow_unverified=True)
        betas = np.outer(betas, w.betas).reshape(-1)
        dirs = np.hstack([np.repeat(dirs, len(w.lambdas), axis=0),
                          np.tile(w.lambdas, len(dirs))[:, None]])
        partial += r_next
    return MultiWitness(exps, betas, dirs, verified)


def witness_residual(witness, points):
    """Largest identity error over ``points`` relative to the largest monomial value."""
    points = np.atleast_2d(points)
    if isinstance(witness, MomentWitness):
        lhs = witness.evaluate(points[:, 0], points[:, 1])
        rhs = points[:, 0] ** witness.r1 * points[:, 1] ** witness.r2
    else:
        lhs = witness.evaluate(points)
        rhs = np.prod(points ** np.asarray(witness.exponents), axis=1)
    return float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), np.finfo(float).tiny))


def projected_cdf_gap(batch, n_directions=64, n_thresholds=None, seed=0):
    """Largest CDF gap of the two groups along sampled unit directions.

    Directions are drawn one after another from ``default_rng(seed)``, so a
    larger ``n_directions`` only adds directions.  With ``n_thresholds=None``
    every pooled projection is a threshold (the exact per-direction maximum);
    otherwise the thresholds are that many evenly spaced pooled quantiles.
    """
    batch.require_nonempty()
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_directions):
        a = rng.standard_normal(batch.m)
        norm = np.linalg.norm(a)
        if norm == 0:
            continue
        a /= norm
        # row-wise reduction: a row's projection must not depend on its position
        p0 = np.sort((batch.z0 * a).sum(axis=1))
        p1 = np.sort((batch.z1 * a).sum(axis=1))
        pooled = np.concatenate([p0, p1])
        if n_thresholds is None:
            ts = pooled
        else:
            ts = np.quantile(pooled, np.linspace(0.0, 1.0, n_thresholds))
        f0 = np.searchsorted(p0, ts, side="right") / len(p0)
        f1 = np.searchsorted(p1, ts, side="right") / len(p1)
        best = max(best, float(np.max(np.abs(f0 - f1))))
    return best


def moment_gap(batch, exponents):
    """``|mean_0 prod_j z_j^{r_j} - mean_1 prod_j z_j^{r_j}|``."""
    batch.require_nonempty()
    r = np.asarray(exponents, dtype=np.int64).reshape(-1)
    if len(r) != batch.m:
        raise ValueError(f"exponent vector has length {len(r)}, data has {batch.m} columns")
    if np.any(r < 0) or r.sum() > MAX_MULTI_DEGREE:
        raise DegreeTooLarge(f"exponents must be nonnegative with total at most {MAX_MULTI_DEGREE}")
    g0 = np.prod(batch.z0 ** r, axis=1).mean()
    g1 = np.prod(batch.z1 ** r, axis=1).mean()
    return float(abs(g0 - g1))


# --- the suite ----------------------------------------------------------------

def _entry(check_id, ok, measured, threshold):
    return {"check_id": check_id, "status": "pass" if ok else "fail",
            "measured": float(measured), "threshold": float(threshold)}


def _shifted_pair(rng, n, m, delta):
    return GroupedBatch(rng.standard_normal((n, m)), rng.standard_normal((n, m)) + delta)


def verify_suite(seed=0, inject_failure=False):
    """Run every check and return a list of ``{check_id, status, measured, threshold}``.

    ``inject_failure`` flips the sign of one witness coefficient, which the
    identity check must catch.
    """
    rng = np.random.default_rng(seed)
    report = []

    pts = rng.uniform(-1.0, 1.0, size=(100, 2))
    worst_res, worst_bound = 0.0, 0.0
    for r in range(2, MAX_UNIVARIATE_DEGREE + 1):
        for r1 in range(1, r):
            w = vandermonde_witness(r1, r - r1)
            if inject_failure and (r1, r - r1) == (2, 3):
                w.betas[0] = -w.betas[0]
            worst_res = max(worst_res, witness_residual(w, pts))
            worst_bound = max(worst_bound, np.abs(w.betas).sum() / math.exp(r))
    report.append(_entry("witness.univariate.identity", worst_res < 1e-8, worst_res, 1e-8))
    report.append(_entry("witness.univariate.bound", worst_bound < 1.0, worst_bound, 1.0))

    worst_res, worst_bound = 0.0, 0.0
    for u in range(1, MAX_MULTI_DIM + 1):
        zs = rng.uniform(-1.0, 1.0, size=(100, u))
        for exps in itertools.product(range(1, MAX_MULTI_DEGREE + 1), repeat=u):
            if sum(exps) > MAX_MULTI_DEGREE:
                continue
            w = multivariate_witness(exps)
            worst_res = max(worst_res, witness_residual(w, zs))
            worst_bound = max(worst_bound,
                              np.abs(w.betas).sum() / math.exp((u - 1) * w.r))
    report.append(_entry("witness.multivariate.identity", worst_res < 1e-6, worst_res, 1e-6))
    report.append(_entry("witness.multivariate.bound", worst_bound <= 1.0, worst_bound, 1.0))

    worst = 0.0
    for k in range(20):
        z = rng.standard_normal((int(rng.integers(1, 30)), int(rng.integers(1, 3))))
        b = GroupedBatch(z, z[rng.permutation(len(z))])
        worst = max(worst, estimate_sipm(b, seed=k), grid_oracle_sipm(b),
                    projected_cdf_gap(b, seed=k))
    report.append(_entry("deviance.identical_groups_zero", worst == 0.0, worst, 0.0))

    lowest = np.inf
    for k in range(20):
        m = int(rng.integers(1, 3))
        n0, n1 = (int(v) for v in rng.integers(1, 30, size=2))
        z0 = rng.uniform(-1.0, 0.0, size=(n0, m)) - 0.25
        z1 = rng.uniform(0.0, 1.0, size=(n1, m)) + 0.25
        b = GroupedBatch(z0, z1)
        lowest = min(lowest, estimate_sipm(b, seed=k), grid_oracle_sipm(b))
    report.append(_entry("deviance.disjoint_support_positive", lowest > 0.5, lowest, 0.5))

    ratio = np.inf
    for k in range(10):
        m = int(rng.integers(1, 3))
        n0, n1 = (int(v) for v in rng.integers(2, 51, size=2))
        b = GroupedBatch(rng.standard_normal((n0, m)),
                         rng.standard_normal((n1, m)) * rng.uniform(0.5, 2.0)
                         + rng.uniform(0.0, 1.5, size=m))
        oracle = grid_oracle_sipm(b, theta_steps=801, mu_steps=801)
        if oracle > 0:
            ratio = min(ratio, estimate_sipm(b, restarts=16, steps=200, seed=k) / oracle)
    report.append(_entry("deviance.ascent_vs_grid_ratio", ratio >= 0.95, ratio, 0.95))

    shifts = np.linspace(0.0, 2.0, 12)
    cdf, ipm = [], []
    for k, delta in enumerate(shifts):
        b = _shifted_pair(rng, 400, 2, delta)
        cdf.append(projected_cdf_gap(b, seed=k))
        ipm.append(estimate_sipm(b, seed=k))
    rho = spearmanr(cdf, ipm)[0]
    report.append(_entry("deviance.rank_correlation", rho > 0.9, rho, 0.9))

    cdf, ipm = [], []
    for k, delta in enumerate((0.0, 0.5, 1.0, 2.0)):
        b = _shifted_pair(rng, 10_000, 2, delta)
        cdf.append(projected_cdf_gap(b, seed=k))
        ipm.append(estimate_sipm(b, seed=k))
    inc_cdf = float(np.min(np.diff(cdf)))
    inc_ipm = float(np.min(np.diff(ipm)))
    report.append(_entry("deviance.cdf_gap_increasing_in_shift", inc_cdf > 0, inc_cdf, 0.0))
    report.append(_entry("deviance.sipm_increasing_in_shift", inc_ipm > 0, inc_ipm, 0.0))
    return report


def all_passed(report):
    return all(e["status"] == "pass" for e in report)


__all__ = [
    "DegreeTooLarge", "EmptyGroup", "MomentWitness", "MultiWitness", "all_passed",
    "moment_gap", "multivariate_witness", "projected_cdf_gap", "vandermonde_witness",
    "verify_suite", "witness_residual",
]

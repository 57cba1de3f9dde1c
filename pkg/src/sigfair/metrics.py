"""Group-fairness gaps, accuracy and Pareto fronts for scored predictions.

A prediction is positive when its logit is strictly above 0.  "Scores" are
the logits passed through a squashing function, sigmoid by default.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .numerics.ops import sigmoid

SQUASHES = {"identity": lambda x: x, "sigmoid": sigmoid}
REPORT_COLUMNS = ("acc", "dp", "mdp", "sdp", "vdp", "eopp", "eo")


class EmptyStratum(ValueError):
    pass


@dataclass
class ScoredBatch:
    logits: np.ndarray
    s: np.ndarray
    y: np.ndarray = None

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64).reshape(-1)
        self.s = np.asarray(self.s).reshape(-1).astype(np.int64)
        if self.s.shape != self.logits.shape:
            raise ValueError(f"logits and s lengths differ: {self.logits.shape} vs {self.s.shape}")
        if self.y is not None:
            self.y = np.asarray(self.y).reshape(-1).astype(np.int64)
            if self.y.shape != self.logits.shape:
                raise ValueError(f"logits and y lengths differ: {self.logits.shape} vs {self.y.shape}")

    def subset(self, mask):
        return ScoredBatch(self.logits[mask], self.s[mask],
                           None if self.y is None else self.y[mask])

    def swapped(self):
        return ScoredBatch(self.logits, 1 - self.s, self.y)


def _squash(name):
    try:
        return SQUASHES[name]
    except KeyError:
        raise ValueError(f"unknown squash {name!r}; choose from {sorted(SQUASHES)}") from None


def _groups(batch, values):
    v0 = values[batch.s == 0]
    v1 = values[batch.s == 1]
    if len(v0) == 0 or len(v1) == 0:
        raise EmptyStratum(f"group sizes {len(v0)} and {len(v1)}")
    return v0, v1


def delta_dp(batch):
    """Absolute difference of positive-prediction rates (logit > 0)."""
    p0, p1 = _groups(batch, (batch.logits > 0).astype(np.float64))
    return float(abs(p0.mean() - p1.mean()))


def delta_mdp(batch, squash="sigmoid"):
    a, b = _groups(batch, np.asarray(_squash(squash)(batch.logits), dtype=np.float64))
    return float(abs(a.mean() - b.mean()))


def delta_sdp(batch, grid=99, squash="sigmoid", thresholds=None):
    """Rate gap averaged over thresholds ``k/(grid+1)``, ``k = 1..grid``.

    ``thresholds`` overrides the uniform grid.
    """
    a, b = _groups(batch, np.asarray(_squash(squash)(batch.logits), dtype=np.float64))
    if thresholds is None:
        if grid < 1:
            raise ValueError("grid must be at least 1")
        taus = np.arange(1, grid + 1) / (grid + 1)
    else:
        taus = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    r0 = (a[:, None] > taus[None, :]).mean(axis=0)
    r1 = (b[:, None] > taus[None, :]).mean(axis=0)
    return float(np.mean(np.abs(r0 - r1)))


def delta_vdp(batch, squash="sigmoid"):
    """Absolute difference of within-group population variances."""
    a, b = _groups(batch, np.asarray(_squash(squash)(batch.logits), dtype=np.float64))
    return float(abs(a.var() - b.var()))


def group_conditional_gap(batch, target, inner=delta_dp):
    """Equal-opportunity (``y == 0`` stratum) or equalized-odds (sum over y) gap."""
    if batch.y is None:
        raise ValueError("conditional gaps need labels")
    if target == "EOpp":
        strata = (0,)
    elif target == "EO":
        strata = (0, 1)
    else:
        raise ValueError(f"unknown conditional target {target!r}")
    return float(sum(inner(batch.subset(batch.y == k)) for k in strata))


def accuracy(batch):
    if batch.y is None:
        raise ValueError("accuracy needs labels")
    if len(batch.y) == 0:
        raise ValueError("accuracy of an empty batch")
    return float(np.mean((batch.logits > 0).astype(np.int64) == batch.y))


@dataclass
class FairnessReport:
    acc: float
    delta_dp: float
    delta_mdp: float
    delta_sdp: float
    delta_vdp: float
    eopp: float
    eo: float
    delta_mdp_raw: float = float("nan")

    def row(self):
        """Values in the fixed CSV column order ``acc, dp, mdp, sdp, vdp, eopp, eo``."""
        return [self.acc, self.delta_dp, self.delta_mdp, self.delta_sdp,
                self.delta_vdp, self.eopp, self.eo]

    def to_json(self):
        d = dict(zip(REPORT_COLUMNS, self.row()))
        d["mdp_raw"] = self.delta_mdp_raw
        return json.dumps(d, sort_keys=False)

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(REPORT_COLUMNS)
        w.writerow([repr(float(v)) for v in self.row()])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d):
        return cls(acc=d["acc"], delta_dp=d["dp"], delta_mdp=d["mdp"], delta_sdp=d["sdp"],
                   delta_vdp=d["vdp"], eopp=d["eopp"], eo=d["eo"],
                   delta_mdp_raw=d.get("mdp_raw", float("nan")))

    def as_dict(self):
        return asdict(self)


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except EmptyStratum:
        return float("nan")


def fairness_report(batch):
    """All gaps for one scored batch; a gap over an empty stratum is NaN."""
    return FairnessReport(
        acc=accuracy(batch),
        delta_dp=_safe(delta_dp, batch),
        delta_mdp=_safe(delta_mdp, batch),
        delta_sdp=_safe(delta_sdp, batch),
        delta_vdp=_safe(delta_vdp, batch),
        eopp=_safe(group_conditional_gap, batch, "EOpp"),
        eo=_safe(group_conditional_gap, batch, "EO"),
        delta_mdp_raw=_safe(delta_mdp, batch, squash="identity"),
    )


def pareto_front(points):
    """Points not dominated in (lower fairness gap, higher accuracy).

    ``points`` are ``(fairness, acc)`` pairs, optionally followed by extra
    payload fields which are carried through.  The front is returned sorted
    by fairness ascending.
    """
    pts = list(points)
    front = []
    for i, p in enumerate(pts):
        f, a = p[0], p[1]
        dominated = False
        for j, q in enumerate(pts):
            if i == j:
                continue
            if q[0] <= f and q[1] >= a and (q[0] < f or q[1] > a):
                dominated = True
                break
        if not dominated:
            front.append(p)
    return sorted(front, key=lambda p: (p[0], -p[1]))

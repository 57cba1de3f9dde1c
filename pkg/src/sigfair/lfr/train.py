"""Adversarial training of fair representations.

Each minibatch first moves every discriminator ``t_adv`` plain gradient
ascent steps on its group gap (measured on the current representations),
then takes one optimizer step on the encoder and head/decoder for

    task loss + lam * sum of discriminator gaps

where the gaps use the freshly updated discriminators.  Discriminators
persist across minibatches and epochs.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..data.dataset import Dataset
from ..ipm import TARGETS, Discriminator, GroupedBatch, ascend, conditional_masks
from ..metrics import ScoredBatch, accuracy, delta_dp
from ..numerics.autodiff import Tape
from ..numerics.ops import bce_with_logits, sigmoid, squared_error
from ..numerics.optim import OPTIMIZERS, OptimizerConfig, optimizer_step
from .models import (DecoderParams, EncoderParams, HeadParams, check_arch, decode, encode,
                     head_logits, restore, snapshot, with_sensitive)

MODES = ("sup", "unsup")
DEFAULT_EPOCHS = {"sup": 400, "unsup": 300}
CRITERIA = ("acc_minus_dp", "min_val_loss")
HISTORY_FIELDS = ("epoch", "train_loss", "fair_loss", "val_loss", "val_acc", "val_dp",
                  "empty_batches")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "sup"
    lam: float = 0.0
    epochs: int = None
    t_adv: int = 2
    batch_size: int = 512
    lr: float = 2.0
    lr_adv: float = None
    optimizer: str = "adadelta"
    fairness_target: str = "DP"
    include_s: bool = True
    seed: int = 0
    m: int = 8
    head_arch: str = "linear"
    downstream_epochs: int = 100

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.epochs is None:
            object.__setattr__(self, "epochs", DEFAULT_EPOCHS[self.mode])
        if self.epochs < 1 or self.downstream_epochs < 1:
            raise ValueError("epoch counts must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.t_adv < 0:
            raise ValueError("t_adv must be nonnegative")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if self.fairness_target not in TARGETS:
            raise ValueError(f"unknown fairness target {self.fairness_target!r}")
        check_arch(self.head_arch)

    @property
    def adv_lr(self):
        return self.lr if self.lr_adv is None else self.lr_adv

    def optimizer_config(self):
        return OptimizerConfig(kind=self.optimizer, learning_rate=self.lr)

    def as_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    step_log: list = None

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([r[name] for r in self.records], dtype=np.float64)

    def to_csv(self):
        lines = [",".join(HISTORY_FIELDS)]
        for r in self.records:
            lines.append(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                                  for k in HISTORY_FIELDS))
        return "\n".join(lines) + "\n"


def select_checkpoint(history, criterion):
    """Pick ``(epoch, snapshot)`` by best ``val_acc - val_dp`` or lowest ``val_loss``.

    Ties go to the earliest epoch.
    """
    if not history.records:
        raise ValueError("cannot select from an empty history")
    if criterion == "acc_minus_dp":
        scores = [r["val_acc"] - r["val_dp"] for r in history.records]
    elif criterion == "min_val_loss":
        scores = [-r["val_loss"] for r in history.records]
    else:
        raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")
    best = 0
    for i, v in enumerate(scores):
        if v > scores[best]:
            best = i
    epoch = history.records[best]["epoch"]
    return epoch, history.snapshots.get(epoch)


def _split_arrays(data, tag):
    X, s, y = data.part(tag)
    if len(X) == 0:
        raise ValueError(f"dataset has no {tag!r} rows; call split() first")
    return X, s.astype(np.float64), y.astype(np.float64)


def _fair_term(tape, H, discs, strata):
    gaps = []
    for disc, (g0, g1) in zip(discs, strata):
        if g0 is None:
            continue
        logits = tape.affine(tape.const(disc.theta[None, :]), tape.const([disc.mu]), H)
        act = tape.sigmoid(logits)
        diff = tape.combine((1.0, tape.mean(act, g0)), (-1.0, tape.mean(act, g1)))
        gaps.append(tape.abs(diff))
    if not gaps:
        return None
    return tape.combine(*((1.0, g) for g in gaps))


def _strata(s, y, target):
    out, empty = [], False
    for g0, g1 in conditional_masks(s, y, target):
        if g0.any() and g1.any():
            out.append((np.flatnonzero(g0), np.flatnonzero(g1)))
        else:
            out.append((None, None))
            empty = True
    return out, empty


def _full_gap(Z, s, y, discs, target):
    total, seen = 0.0, False
    for disc, (g0, g1) in zip(discs, conditional_masks(s, y, target)):
        if g0.any() and g1.any():
            a = sigmoid(Z[g0] @ disc.theta + disc.mu).mean()
            b = sigmoid(Z[g1] @ disc.theta + disc.mu).mean()
            total += abs(a - b)
            seen = True
    return total if seen else float("nan")


def _init_discs(config, rng):
    n = 2 if config.fairness_target == "EO" else 1
    return [Discriminator.random(config.m, rng) for _ in range(n)]


def batch_objective(tape, enc, other, task_loss, xb, Xraw, yb, discs, strata, lam):
    """Record ``task + lam * sum of gaps`` for one minibatch on ``tape``.

    ``xb`` is the encoder input (sensitive column already appended when it
    is used), ``Xraw`` the reconstruction target.  ``discs=None`` leaves the
    fair term out entirely.  Returns ``(total, task, fair)`` nodes with
    ``fair`` None when no stratum has both groups.
    """
    H = enc.forward(tape, tape.const(xb))
    task = task_loss(tape, H, other, Xraw, yb)
    fair = None if discs is None else _fair_term(tape, H, discs, strata)
    if fair is None:
        return task, task, None
    return tape.combine((1.0, task), (lam, fair)), task, fair



def _run(data, config, model, task_loss, val_metrics, fair_term=True, log_steps=False):
    """Shared minibatch loop; ``model`` is ``(encoder, other)``."""
    enc, other = model
    X, s, y = _split_arrays(data, "train")
    Xv, sv, yv = _split_arrays(data, "val")
    Xin = with_sensitive(X, s, config.include_s)
    discs = _init_discs(config, np.random.default_rng([config.seed, 2]))
    shuffle = np.random.default_rng([config.seed, 1])
    opt = config.optimizer_config()
    blocks = list(enc.blocks().values()) + list(other.blocks().values())
    history = TrainHistory(step_log=[] if log_steps else None)
    n = len(X)
    for epoch in range(1, config.epochs + 1):
        perm = shuffle.permutation(n)
        task_sum, fair_sum, fair_count, batches, empties = 0.0, 0.0, 0, 0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, sb, yb = Xin[idx], s[idx], y[idx]
            strata, empty = _strata(sb, yb, config.fairness_target)
            empties += int(empty)
            if fair_term:
                Zb = encode(enc, xb, None, include_s=False)
                for k, (g0, g1) in enumerate(strata):
                    if g0 is None:
                        continue
                    gb = GroupedBatch(Zb[g0], Zb[g1])
                    for _ in range(config.t_adv):
                        discs[k] = ascend(discs[k], gb, config.adv_lr, 1)
                        if log_steps:
                            history.step_log.append(("adv", k))
            tape = Tape()
            total, task, fair = batch_objective(tape, enc, other, task_loss, xb, X[idx], yb,
                                                discs if fair_term else None, strata,
                                                config.lam)
            if fair is not None:
                fair_sum += float(fair.value)
                fair_count += 1
            tape.backward(total)
            for blk in blocks:
                optimizer_step(blk, opt)
                blk.zero_grad()
            if log_steps:
                history.step_log.append(("model", 0))
            task_sum += float(task.value)
            batches += 1
        Zv = encode(enc, Xv, sv, include_s=config.include_s)
        v_task, v_acc, v_dp = val_metrics(Zv, other, Xv, sv, yv)
        v_fair = _full_gap(Zv, sv, yv, discs, config.fairness_target)
        v_loss = v_task + config.lam * v_fair if fair_term and np.isfinite(v_fair) else v_task
        history.records.append({
            "epoch": epoch,
            "train_loss": task_sum / batches,
            "fair_loss": fair_sum / fair_count if fair_count else float("nan"),
            "val_loss": float(v_loss),
            "val_acc": float(v_acc),
            "val_dp": float(v_dp),
            "empty_batches": empties,
        })
        history.snapshots[epoch] = snapshot(enc, other)
    return history


def _bce_task(tape, H, head, Xraw, yb):
    return tape.bce_with_logits(head.forward(tape, H), yb)


def _bce_val(Zv, head, Xv, sv, yv):
    logits = head_logits(head, Zv)
    batch = ScoredBatch(logits, sv, yv)
    try:
        dp = delta_dp(batch)
    except ValueError:
        dp = float("nan")
    return bce_with_logits(logits, yv), accuracy(batch), dp


def _recon_task(tape, H, dec, Xraw, yb):
    return tape.squared_error(tape.const(Xraw), dec.forward(tape, H))


def _recon_val(Zv, dec, Xv, sv, yv):
    return squared_error(Xv, decode(dec, Zv)), float("nan"), float("nan")


TASKS = {"sup": _bce_task, "unsup": _recon_task}


def train_supervised(data, config, fair_term=True, log_steps=False):
    """Jointly fit encoder and head; returns ``(encoder, head, history)``.

    The returned parameters are those of the final epoch; use
    :func:`select_checkpoint` with ``history`` to pick another epoch.
    """
    if config.mode != "sup":
        raise ValueError("train_supervised needs mode='sup'")
    rng = np.random.default_rng(config.seed)
    enc = EncoderParams.init(data.d, config.m, rng, include_s=config.include_s)
    head = HeadParams.init(config.head_arch, config.m, rng)
    history = _run(data, config, (enc, head), _bce_task, _bce_val, fair_term, log_steps)
    return enc, head, history


def train_unsupervised(data, config, fair_term=True, log_steps=False):
    """Fit encoder and decoder on reconstruction error; labels are not used."""
    if config.mode != "unsup":
        raise ValueError("train_unsupervised needs mode='unsup'")
    if config.fairness_target != "DP":
        raise ValueError("label-conditional targets need labels; unsupervised mode supports DP only")
    rng = np.random.default_rng(config.seed)
    enc = EncoderParams.init(data.d, config.m, rng, include_s=config.include_s)
    dec = DecoderParams.init(config.m, data.d, rng)
    history = _run(data, config, (enc, dec), _recon_task, _recon_val, fair_term, log_steps)
    return enc, dec, history


def train_downstream(enc, data, arch, config, epochs=None):
    """Fit a head on frozen representations and keep the lowest-validation-loss epoch.

    Returns ``(head, history)``; ``history.records[i]["val_dp"]`` is the
    validation demographic-parity gap of that epoch's head.
    """
    check_arch(arch)
    epochs = config.downstream_epochs if epochs is None else epochs
    X, s, y = _split_arrays(data, "train")
    Xv, sv, yv = _split_arrays(data, "val")
    Z = encode(enc, X, s)
    Zv = encode(enc, Xv, sv)
    rng = np.random.default_rng([config.seed, 3])
    head = HeadParams.init(arch, enc.m, rng)
    shuffle = np.random.default_rng([config.seed, 4])
    opt = config.optimizer_config()
    blocks = list(head.blocks().values())
    history = TrainHistory()
    n = len(Z)
    for epoch in range(1, epochs + 1):
        perm = shuffle.permutation(n)
        loss_sum, batches = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            tape = Tape()
            loss = tape.bce_with_logits(head.forward(tape, tape.const(Z[idx])), y[idx])
            tape.backward(loss)
            for blk in blocks:
                optimizer_step(blk, opt)
                blk.zero_grad()
            loss_sum += float(loss.value)
            batches += 1
        v_loss, v_acc, v_dp = _bce_val(Zv, head, Xv, sv, yv)
        history.records.append({"epoch": epoch, "train_loss": loss_sum / batches,
                                "fair_loss": float("nan"), "val_loss": float(v_loss),
                                "val_acc": float(v_acc), "val_dp": float(v_dp),
                                "empty_batches": 0})
        history.snapshots[epoch] = snapshot(head)
    epoch, snap = select_checkpoint(history, "min_val_loss")
    restore(snap, head)
    return head, history


def representations(enc, data, tag):
    X, s, y = data.part(tag)
    return encode(enc, X, s), s, y


__all__ = [
    "CRITERIA", "DEFAULT_EPOCHS", "HISTORY_FIELDS", "MODES", "TASKS", "Dataset", "TrainConfig",
    "batch_objective",
    "TrainHistory", "representations", "select_checkpoint", "train_downstream",
    "train_supervised", "train_unsupervised",
]

"""Encoder, decoder and prediction-head parameter blocks with their forward passes."""

from dataclasses import dataclass

import numpy as np

from ..numerics.autodiff import ParamBlock
from ..numerics.ops import ShapeError, affine, as_matrix, leaky_relu, sigmoid

ARCHS = ("linear", "leakyrelu1", "sigmoid1", "sigmoid2")
_HIDDEN = {"linear": 0, "leakyrelu1": 1, "sigmoid1": 1, "sigmoid2": 2}


def _uniform_layer(rng, n_out, n_in):
    bound = 1.0 / np.sqrt(n_in)
    W = ParamBlock(rng.uniform(-bound, bound, size=(n_out, n_in)))
    b = ParamBlock(rng.uniform(-bound, bound, size=n_out))
    return W, b


def check_arch(arch):
    if arch not in ARCHS:
        raise ValueError(f"unknown head architecture {arch!r}; valid names: {', '.join(ARCHS)}")
    return arch


def with_sensitive(X, s, include_s):
    X = as_matrix(X)
    if not include_s:
        return X
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if len(s) != len(X):
        raise ShapeError(f"X has {len(X)} rows but s has {len(s)}")
    return np.hstack([X, s[:, None]])


@dataclass
class EncoderParams:
    W: ParamBlock
    b: ParamBlock
    slope: float = 0.01
    include_s: bool = True

    @classmethod
    def init(cls, d, m, rng, include_s=True, slope=0.01):
        W, b = _uniform_layer(rng, m, d + int(include_s))
        return cls(W, b, slope, include_s)

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def d_in(self):
        return self.W.shape[1]

    def blocks(self):
        return {"enc.W": self.W, "enc.b": self.b}

    def forward(self, tape, Xin):
        pre = tape.affine(tape.param(self.W), tape.param(self.b), Xin)
        return tape.leaky_relu(pre, self.slope)


def encode(enc, X, s, include_s=None):
    """Representations ``leaky_relu([X | s] W^T + b)``, one row per sample."""
    include_s = enc.include_s if include_s is None else include_s
    Xin = with_sensitive(X, s, include_s)
    if Xin.shape[1] != enc.d_in:
        raise ShapeError(f"encoder expects {enc.d_in} input columns, got {Xin.shape[1]}")
    return leaky_relu(affine(enc.W.value, enc.b.value, Xin), enc.slope)


@dataclass
class DecoderParams:
    W: ParamBlock
    b: ParamBlock

    @classmethod
    def init(cls, m, d, rng):
        return cls(*_uniform_layer(rng, d, m))

    def blocks(self):
        return {"dec.W": self.W, "dec.b": self.b}

    def forward(self, tape, H):
        return tape.affine(tape.param(self.W), tape.param(self.b), H)


def decode(dec, Z):
    return affine(dec.W.value, dec.b.value, as_matrix(Z))


@dataclass
class HeadParams:
    """A scalar-logit predictor; hidden layers all have width ``m``."""
    arch: str
    layers: list
    slope: float = 0.01

    @classmethod
    def init(cls, arch, m, rng, slope=0.01):
        check_arch(arch)
        layers = [_uniform_layer(rng, m, m) for _ in range(_HIDDEN[arch])]
        layers.append(_uniform_layer(rng, 1, m))
        return cls(arch, layers, slope)

    def blocks(self):
        out = {}
        for i, (W, b) in enumerate(self.layers):
            out[f"head.{i}.W"] = W
            out[f"head.{i}.b"] = b
        return out

    def _act(self, tape, x):
        if self.arch == "leakyrelu1":
            return tape.leaky_relu(x, self.slope)
        return tape.sigmoid(x)

    def forward(self, tape, H):
        for W, b in self.layers[:-1]:
            H = self._act(tape, tape.affine(tape.param(W), tape.param(b), H))
        W, b = self.layers[-1]
        return tape.affine(tape.param(W), tape.param(b), H)


def head_logits(head, Z):
    H = as_matrix(Z)
    for W, b in head.layers[:-1]:
        pre = affine(W.value, b.value, H)
        H = leaky_relu(pre, head.slope) if head.arch == "leakyrelu1" else sigmoid(pre)
    W, b = head.layers[-1]
    return affine(W.value, b.value, H).reshape(-1)


def snapshot(*models):
    """Copies of every parameter array, keyed by block name."""
    out = {}
    for model in models:
        for name, block in model.blocks().items():
            out[name] = block.value.copy()
    return out


def restore(snap, *models):
    for model in models:
        for name, block in model.blocks().items():
            if snap[name].shape != block.shape:
                raise ShapeError(f"{name}: snapshot {snap[name].shape} vs block {block.shape}")
            block.value = snap[name].copy()
            block.grad = np.zeros_like(block.value)
            block.state = {}

"""Elementwise activations, affine maps and the two training losses.

Everything works on float64 numpy arrays.  Matrices are 2-D arrays with
samples along rows.
"""

import numpy as np


class ShapeError(ValueError):
    pass


def as_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {X.shape}")
    return X


def sigmoid(x):
    """Increasing logistic function ``1 / (1 + exp(-x))``.

    Evaluated branch-wise so that no intermediate overflows.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def leaky_relu(x, slope=0.01):
    if slope < 0:
        raise ValueError(f"slope must be nonnegative, got {slope}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, x, slope * x)
    if out.ndim == 0:
        return float(out)
    return out


def affine(W, b, X):
    """Row-wise ``W @ x_i + b`` for every row ``x_i`` of ``X``."""
    W = as_matrix(W)
    X = as_matrix(X)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if W.shape[1] != X.shape[1]:
        raise ShapeError(
            f"affine: weight shape {W.shape} incompatible with input shape {X.shape}")
    if b.shape[0] != W.shape[0]:
        raise ShapeError(
            f"affine: bias shape {b.shape} incompatible with weight shape {W.shape}")
    return X @ W.T + b


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy of ``labels`` under ``sigmoid(logits)``."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if logits.shape != labels.shape:
        raise ShapeError(
            f"bce_with_logits: logits shape {logits.shape} vs labels shape {labels.shape}")
    if logits.size == 0:
        raise ValueError("bce_with_logits: empty batch")
    signed = (2.0 * labels - 1.0) * logits
    return float(np.mean(softplus(-signed)))


def squared_error(X, Xhat):
    """Per-sample squared L2 reconstruction error, averaged over samples."""
    X = as_matrix(X)
    Xhat = as_matrix(Xhat)
    if X.shape != Xhat.shape:
        raise ShapeError(f"squared_error: shape {X.shape} vs {Xhat.shape}")
    if X.shape[0] == 0:
        raise ValueError("squared_error: empty batch")
    return float(np.mean(np.sum((X - Xhat) ** 2, axis=1)))

"""In-place first-order updates for :class:`ParamBlock`.

The Adadelta rule follows the common reference form in which the
accumulated-delta step is additionally scaled by a learning rate, so that
``lr=2.0`` is meaningful.
"""

from dataclasses import dataclass

import numpy as np

OPTIMIZERS = ("adadelta", "adam", "sgd")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adadelta"
    learning_rate: float = 2.0
    rho: float = 0.9
    eps: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.kind!r}; choose from {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")


def optimizer_step(block, config):
    """Apply one descent step to ``block.value`` using ``block.grad``.

    Accumulators live in ``block.state`` and are created on first use.  From
    a fresh state a zero gradient leaves the value untouched for every kind.
    """
    g = block.grad
    st = block.state
    if config.kind == "sgd":
        block.value -= config.learning_rate * g
    elif config.kind == "adadelta":
        if "square_avg" not in st:
            st["square_avg"] = np.zeros_like(block.value)
            st["acc_delta"] = np.zeros_like(block.value)
        rho, eps = config.rho, config.eps
        sq = st["square_avg"]
        sq *= rho
        sq += (1.0 - rho) * g * g
        delta = np.sqrt(st["acc_delta"] + eps) / np.sqrt(sq + eps) * g
        st["acc_delta"] *= rho
        st["acc_delta"] += (1.0 - rho) * delta * delta
        block.value -= config.learning_rate * delta
    else:
        if "m" not in st:
            st["m"] = np.zeros_like(block.value)
            st["v"] = np.zeros_like(block.value)
            st["t"] = 0
        b1, b2 = config.beta1, config.beta2
        st["t"] += 1
        st["m"] *= b1
        st["m"] += (1.0 - b1) * g
        st["v"] *= b2
        st["v"] += (1.0 - b2) * g * g
        m_hat = st["m"] / (1.0 - b1 ** st["t"])
        v_hat = st["v"] / (1.0 - b2 ** st["t"])
        block.value -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return block

"""Fair representation learning: models, adversarial training, checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .models import (ARCHS, DecoderParams, EncoderParams, HeadParams, check_arch, decode,
                     encode, head_logits, restore, snapshot, with_sensitive)
from .train import (CRITERIA, DEFAULT_EPOCHS, HISTORY_FIELDS, MODES, TASKS, TrainConfig,
                    batch_objective,
                    TrainHistory, representations, select_checkpoint, train_downstream,
                    train_supervised, train_unsupervised)

__all__ = [
    "ARCHS", "CRITERIA", "CheckpointError", "DEFAULT_EPOCHS", "DecoderParams",
    "EncoderParams", "HISTORY_FIELDS", "HeadParams", "MODES", "TASKS", "TrainConfig", "TrainHistory",
    "batch_objective", "check_arch", "decode", "encode", "head_logits", "load_checkpoint", "representations",
    "restore", "save_checkpoint", "select_checkpoint", "snapshot", "train_downstream",
    "train_supervised", "train_unsupervised", "with_sensitive",
]

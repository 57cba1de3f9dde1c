"""JSON checkpoints holding every parameter block and the producing config."""

import json

import numpy as np

from ..numerics.autodiff import ParamBlock
from .models import DecoderParams, EncoderParams, HeadParams
from .train import TrainConfig

FORMAT = "sigfair-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_dict(config, encoder, other, epoch=None):
    blocks = dict(encoder.blocks())
    blocks.update(other.blocks())
    rec = {
        "format": FORMAT,
        "version": VERSION,
        "config": config.as_dict(),
        "epoch": epoch,
        "encoder": {"slope": encoder.slope, "include_s": encoder.include_s},
        "blocks": {k: {"shape": list(b.shape), "values": b.value.reshape(-1).tolist()}
                   for k, b in blocks.items()},
    }
    if isinstance(other, HeadParams):
        rec["head"] = {"arch": other.arch, "slope": other.slope, "n_layers": len(other.layers)}
    return rec


def save_checkpoint(path, config, encoder, other, epoch=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(config, encoder, other, epoch), fh, sort_keys=True)
        fh.write("\n")


def _block(rec, name):
    try:
        entry = rec["blocks"][name]
    except KeyError:
        raise CheckpointError(f"checkpoint has no block {name!r}") from None
    vals = np.asarray(entry["values"], dtype=np.float64)
    shape = tuple(entry["shape"])
    if vals.size != int(np.prod(shape)):
        raise CheckpointError(f"block {name!r}: {vals.size} values for shape {shape}")
    return ParamBlock(vals.reshape(shape))


def load_checkpoint(path):
    """Return ``(config, encoder, other, epoch)``; ``other`` is a head or a decoder."""
    try:
        with open(path, encoding="utf-8") as fh:
            rec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    if rec.get("format") != FORMAT or rec.get("version") != VERSION:
        raise CheckpointError(f"{path}: not a version-{VERSION} checkpoint")
    config = TrainConfig(**rec["config"])
    enc = EncoderParams(_block(rec, "enc.W"), _block(rec, "enc.b"),
                        rec["encoder"]["slope"], rec["encoder"]["include_s"])
    if "head" in rec:
        h = rec["head"]
        layers = [(_block(rec, f"head.{i}.W"), _block(rec, f"head.{i}.b"))
                  for i in range(h["n_layers"])]
        other = HeadParams(h["arch"], layers, h["slope"])
    else:
        other = DecoderParams(_block(rec, "dec.W"), _block(rec, "dec.b"))
    return config, enc, other, rec.get("epoch")

"""The in-memory dataset, its train/val/test tags, scaling, and a binary cache."""

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

SPLITS = ("train", "val", "test")
_CODES = {"train": 0, "val": 1, "test": 2, "": 255}
_MAGIC = b"SGFD"
_VERSION = 1


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    s: np.ndarray
    y: np.ndarray
    split: np.ndarray = None
    feature_names: list = None
    standardization: dict = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.X)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {self.X.shape}")
        if len(self.s) != n or len(self.y) != n:
            raise ValueError("X, s and y must have the same number of rows")
        if self.split is None:
            object.__setattr__(self, "split", np.full(n, "", dtype="<U5"))
        if self.feature_names is None:
            object.__setattr__(self, "feature_names", [f"x{j}" for j in range(self.X.shape[1])])

    @property
    def n(self):
        return len(self.X)

    @property
    def d(self):
        return self.X.shape[1]

    def part(self, tag):
        """``(X, s, y)`` restricted to rows tagged ``tag``."""
        mask = self.split == tag
        return self.X[mask], self.s[mask], self.y[mask]

    def sizes(self):
        return {t: int(np.sum(self.split == t)) for t in SPLITS}


def split(dataset, scheme="random", test_fraction=0.3, val_fraction=0.2, seed=0):
    """Tag rows as train / val / test.

    ``random``: a seeded permutation sends ``floor(test_fraction * n)`` rows
    to test, then ``floor(val_fraction * rest)`` of the remainder to val.
    ``fixed_test``: rows already tagged ``test`` stay there and the rest is
    divided into train and val the same way.
    """
    rng = np.random.default_rng(seed)
    n = dataset.n
    tags = np.full(n, "", dtype="<U5")
    if scheme == "random":
        perm = rng.permutation(n)
        n_test = int(np.floor(test_fraction * n))
        tags[perm[:n_test]] = "test"
        rest = perm[n_test:]
    elif scheme == "fixed_test":
        is_test = dataset.split == "test"
        tags[is_test] = "test"
        rest = np.flatnonzero(~is_test)
        rest = rest[rng.permutation(len(rest))]
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")
    n_val = int(np.floor(val_fraction * len(rest)))
    tags[rest[:n_val]] = "val"
    tags[rest[n_val:]] = "train"
    sizes = {t: int(np.sum(tags == t)) for t in SPLITS}
    empty = [t for t, k in sizes.items() if k == 0]
    if empty:
        raise SplitError(f"split leaves {', '.join(empty)} empty (sizes {sizes})")
    return replace(dataset, split=tags)


def standardize(dataset):
    """Centre and scale every feature with train-split statistics.

    Features that are constant on the train split are dropped and noted.
    """
    Xtr = dataset.X[dataset.split == "train"]
    if len(Xtr) == 0:
        raise SplitError("standardize needs a nonempty train split")
    mean = Xtr.mean(axis=0)
    std = Xtr.std(axis=0)
    keep = std > 0
    notes = list(dataset.notes)
    names = list(dataset.feature_names)
    dropped = [names[j] for j in np.flatnonzero(~keep)]
    if dropped:
        notes.append(f"dropped constant features: {', '.join(dropped)}")
    X = (dataset.X[:, keep] - mean[keep]) / std[keep]
    return replace(dataset, X=X, feature_names=[n for n, k in zip(names, keep) if k],
                   standardization={"mean": mean[keep].tolist(), "std": std[keep].tolist(),
                                    "dropped": dropped},
                   notes=notes)


def save_dataset(path, dataset):
    """Write the version-1 binary cache.

    Layout (little-endian): magic ``SGFD``, version byte, ``n`` and ``d`` as
    uint64, a uint32-length-prefixed JSON metadata block, then ``X`` as
    float64, ``s``, ``y`` and split codes as uint8.
    """
    meta = json.dumps({"feature_names": list(dataset.feature_names),
                       "standardization": dataset.standardization,
                       "notes": list(dataset.notes)}, sort_keys=True).encode("utf-8")
    codes = np.array([_CODES[t] for t in dataset.split], dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BQQ", _VERSION, dataset.n, dataset.d))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(np.ascontiguousarray(dataset.X, dtype="<f8").tobytes())
        fh.write(np.asarray(dataset.s, dtype=np.uint8).tobytes())
        fh.write(np.asarray(dataset.y, dtype=np.uint8).tobytes())
        fh.write(codes.tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a dataset cache")
    version, n, d = struct.unpack_from("<BQQ", blob, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    off = 4 + struct.calcsize("<BQQ")
    (mlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    meta = json.loads(blob[off:off + mlen].decode("utf-8"))
    off += mlen
    X = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(np.float64)
    off += 8 * n * d
    s = np.frombuffer(blob, dtype=np.uint8, count=n, offset=off).astype(np.int8)
    off += n
    y = np.frombuffer(blob, dtype=np.uint8, count=n, offset=off).astype(np.int8)
    off += n
    codes = np.frombuffer(blob, dtype=np.uint8, count=n, offset=off)
    inverse = {v: k for k, v in _CODES.items()}
    tags = np.array([inverse[c] for c in codes], dtype="<U5")
    return Dataset(X=X, s=s, y=y, split=tags, feature_names=meta["feature_names"],
                   standardization=meta["standardization"], notes=meta["notes"])

"""Pack and head directories in pure numpy.

Lets a feature extractor write packs without the native module. The layout
matches the C++ reader byte for byte: meta.json plus little-endian float32
matrices, row-major, no header.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Sequence, Union

import numpy as np

PACK_FORMAT = "ttaood-pack"
HEAD_FORMAT = "ttaood-head"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test_id", "test_ood")

Label = Union[int, str]


def _le32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite value in {what}")


def write_pack(
    directory: Union[str, os.PathLike],
    features: np.ndarray,
    logits: np.ndarray,
    sample_ids: Sequence[str],
    labels: Sequence[Label],
    split: str,
    view: str = "none",
    model_id: str = "",
) -> None:
    features = np.asarray(features, dtype=np.float32)
    logits = np.asarray(logits, dtype=np.float32)
    if features.ndim != 2 or logits.ndim != 2:
        raise ValueError("features and logits must be 2-d")
    n = features.shape[0]
    if n < 1:
        raise ValueError("empty pack")
    if logits.shape[0] != n or len(sample_ids) != n or len(labels) != n:
        raise ValueError("dimension mismatch between features, logits, ids and labels")
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    if len(set(sample_ids)) != n:
        raise ValueError("duplicate sample id")
    _check_finite(features, "features")
    _check_finite(logits, "logits")

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": PACK_FORMAT,
        "version": FORMAT_VERSION,
        "n": n,
        "feature_dim": int(features.shape[1]),
        "num_classes": int(logits.shape[1]),
        "split": split,
        "view": view,
        "model_id": model_id,
        "sample_ids": list(sample_ids),
        "labels": [int(x) if isinstance(x, (int, np.integer)) else str(x) for x in labels],
    }
    _atomic_write(d / "features.bin", _le32(features))
    _atomic_write(d / "logits.bin", _le32(logits))
    _atomic_write(d / "meta.json", (json.dumps(meta, indent=1) + "\n").encode())


def read_pack(directory: Union[str, os.PathLike]) -> dict:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    if meta.get("format") != PACK_FORMAT:
        raise ValueError("malformed meta: unexpected format tag")
    n, m, c = meta["n"], meta["feature_dim"], meta["num_classes"]

    def load(name: str, cols: int) -> np.ndarray:
        raw = (d / name).read_bytes()
        if len(raw) != n * cols * 4:
            raise ValueError(f"corrupt pack: {name} has {len(raw)} bytes, expected {n * cols * 4}")
        return np.frombuffer(raw, dtype="<f4").reshape(n, cols).astype(np.float32)

    out = dict(meta)
    out["features"] = load("features.bin", m)
    out["logits"] = load("logits.bin", c)
    return out


def write_head(directory: Union[str, os.PathLike], weights: np.ndarray, bias: np.ndarray) -> None:
    weights = np.asarray(weights, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if weights.ndim != 2 or bias.shape != (weights.shape[0],):
        raise ValueError("head needs weights C x m and bias of length C")
    _check_finite(weights, "head weights")
    _check_finite(bias, "head bias")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": HEAD_FORMAT,
        "version": FORMAT_VERSION,
        "num_classes": int(weights.shape[0]),
        "feature_dim": int(weights.shape[1]),
    }
    _atomic_write(d / "head.bin", _le32(weights) + _le32(bias))
    _atomic_write(d / "head.json", (json.dumps(meta, indent=1) + "\n").encode())


def read_head(directory: Union[str, os.PathLike]) -> tuple[np.ndarray, np.ndarray]:
    d = Path(directory)
    meta = json.loads((d / "head.json").read_text())
    c, m = meta["num_classes"], meta["feature_dim"]
    raw = (d / "head.bin").read_bytes()
    if len(raw) != (c * m + c) * 4:
        raise ValueError("head.bin size does not match head.json")
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    return flat[: c * m].reshape(c, m), flat[c * m :]

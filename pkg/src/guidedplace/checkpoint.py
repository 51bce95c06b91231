"""JSON checkpoints: tensors as base64 little-endian bytes, written atomically."""

from __future__ import annotations

import base64
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

FORMAT = "guidedplace-checkpoint"
VERSION = 1


def encode_tensor(t):
    a = t.detach().cpu().numpy()
    return {"dtype": a.dtype.str, "shape": list(a.shape),
            "data": base64.b64encode(np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")).tobytes()).decode()}


def decode_tensor(d):
    try:
        a = np.frombuffer(base64.b64decode(d["data"]), dtype=np.dtype(d["dtype"]).newbyteorder("<"))
        return torch.from_numpy(a.astype(a.dtype.newbyteorder("=")).reshape(d["shape"]).copy())
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"bad tensor record: {exc}") from exc


def encode_state(state):
    return {k: encode_tensor(v) for k, v in state.items()}


def decode_state(d):
    return {k: decode_tensor(v) for k, v in d.items()}


def atomic_write_text(path, text):
    """Write via a temp file in the same directory and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, doc):
    doc = {"format": FORMAT, "version": VERSION, **doc}
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1))


def load(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path} has unsupported version {doc.get('version')}")
    return doc

"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"LFSA" | u32 version | u32 metadata length | UTF-8 JSON metadata
    | f32 payload (parameters concatenated in metadata order) | 8-byte digest

The digest is BLAKE2b-64 over the payload bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"LFSA"
VERSION = 1
_DIGEST_BYTES = 8


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_DIGEST_BYTES).digest()


def save_checkpoint(model, path, extra: dict | None = None) -> Path:
    """Write ``model`` (Backbone or Adaptation) and optional extra metadata to ``path``."""
    path = Path(path)
    names, shapes, chunks = [], [], []
    for name, t in model.named_parameters():
        names.append(name)
        shapes.append(list(t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    meta = {"model": model.metadata(), "names": names, "shapes": shapes}
    if extra:
        meta["extra"] = extra
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(_digest(payload))
    return path


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse and verify a checkpoint file; returns (metadata, name -> float32 array)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an LFSA checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    start = 12 + hlen
    if len(raw) < start + _DIGEST_BYTES:
        raise CheckpointError(f"{path}: truncated header")
    try:
        meta = json.loads(raw[12:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata ({exc})") from exc
    sizes = [int(np.prod(s)) for s in meta["shapes"]]
    expected = 4 * sum(sizes)
    payload = raw[start:len(raw) - _DIGEST_BYTES]
    if len(payload) != expected:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, metadata declares {expected}")
    if raw[len(raw) - _DIGEST_BYTES:] != _digest(payload):
        raise CheckpointError(f"{path}: payload digest mismatch (file corrupted)")
    flat = np.frombuffer(payload, dtype="<f4")
    arrays, offset = {}, 0
    for name, shape, size in zip(meta["names"], meta["shapes"], sizes):
        arrays[name] = flat[offset:offset + size].reshape(shape).astype(np.float32)
        offset += size
    return meta, arrays


def load_checkpoint(path, expect: dict | None = None):
    """Rebuild the model stored in ``path``.

    ``expect`` maps metadata keys (e.g. ``{"kind": "adaptation", "angular": 5}``)
    to required values; any mismatch raises instead of loading.
    """
    from .adaptation import Adaptation
    from .backbone import Backbone

    meta, arrays = read_checkpoint(path)
    model_meta = meta["model"]
    for key, want in (expect or {}).items():
        if model_meta.get(key) != want:
            raise CheckpointError(f"{path}: checkpoint has {key}={model_meta.get(key)!r}, run requires {want!r}")
    kind = model_meta.get("kind")
    if kind == "backbone":
        model = Backbone.from_metadata(model_meta)
    elif kind == "adaptation":
        model = Adaptation.from_metadata(model_meta)
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    try:
        model.load_state_dict(arrays)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    if kind == "backbone":
        model.set_frozen(bool(model_meta.get("frozen", False)))
    return model

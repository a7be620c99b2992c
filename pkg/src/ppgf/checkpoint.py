"""Binary checkpoint format.

Layout: the magic bytes ``PPGF1\\n``, one UTF-8 JSON header line
``{"format_version", "config", "parameters": [[name, shape, dtype, offset]]}``
terminated by ``\\n``, then the little-endian parameter bytes in manifest
order. Offsets are relative to the start of the payload.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import BadMagic, CheckpointError, TruncatedCheckpoint, VersionMismatch
from .model import PPGFConfig, build

MAGIC = b"PPGF1\n"
FORMAT_VERSION = 1


def to_bytes(model):
    manifest, chunks, offset = [], [], 0
    for name, p in model.params.items():
        arr = np.ascontiguousarray(p.data, dtype=p.data.dtype.newbyteorder("<"))
        manifest.append([name, list(arr.shape), arr.dtype.str, offset])
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {"format_version": FORMAT_VERSION, "config": model.config.to_dict(),
              "parameters": manifest}
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    return MAGIC + line + b"".join(chunks)


def from_bytes(blob):
    if not blob.startswith(MAGIC):
        raise BadMagic("not a checkpoint: bad magic bytes")
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise TruncatedCheckpoint("checkpoint header is incomplete")
    try:
        header = json.loads(blob[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"checkpoint format {header.get('format_version')}, expected {FORMAT_VERSION}")
    payload = blob[end + 1:]
    expected = 0
    for name, shape, dtype, offset in header["parameters"]:
        expected = max(expected, offset + int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize)
    if len(payload) < expected:
        raise TruncatedCheckpoint(f"payload has {len(payload)} bytes, manifest needs {expected}")
    if len(payload) > expected:
        raise CheckpointError(f"payload has {len(payload) - expected} trailing bytes")

    config = PPGFConfig.from_dict(header["config"])
    model = build(config)
    state = {}
    for name, shape, dtype, offset in header["parameters"]:
        dt = np.dtype(dtype)
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dt, count=n, offset=offset).reshape(shape)
        state[name] = arr.astype(dt.newbyteorder("="))
    model.load_state_dict(state)
    return model


def save_checkpoint(model, path):
    Path(path).write_bytes(to_bytes(model))


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())

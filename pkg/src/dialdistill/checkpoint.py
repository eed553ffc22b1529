"""Checkpoint persistence.

Binary layout: 5-byte magic ``SDKD1``, a little-endian uint32 header
length, a UTF-8 JSON header ``{"configs": ..., "manifest": [{"name",
"shape", "trainable"}, ...], "frozen": [...]}``, then each tensor's raw
IEEE-754 single-precision little-endian values in manifest order.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import tensor as T
from .errors import CheckpointFormatError
from .model import ModelConfig, ParameterSet, TransformerModel, init_params

MAGIC = b"SDKD1"
_PAYLOAD_DTYPE = np.dtype("<f4")


def save_checkpoint(params: ParameterSet, configs: dict, path) -> None:
    manifest = []
    blobs = []
    for name, tensor in params.items():
        manifest.append(
            {
                "name": name,
                "shape": list(tensor.data.shape),
                "trainable": params.is_trainable(name),
            }
        )
        blobs.append(np.ascontiguousarray(tensor.data, dtype=_PAYLOAD_DTYPE).tobytes())
    header = json.dumps(
        {"configs": configs, "manifest": manifest, "frozen": sorted(params.frozen)},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Read a checkpoint back as (ParameterSet, configs dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4:
        raise CheckpointFormatError(f"{path}: truncated before header")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(
            f"{path}: bad magic {raw[: len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    (header_len,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    header_start = len(MAGIC) + 4
    if header_start + header_len > len(raw):
        raise CheckpointFormatError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable JSON header: {exc}") from exc
    for key in ("configs", "manifest"):
        if key not in header:
            raise CheckpointFormatError(f"{path}: header missing {key!r}")

    payload = raw[header_start + header_len :]
    expected = sum(
        int(np.prod(entry["shape"], dtype=np.int64)) for entry in header["manifest"]
    ) * _PAYLOAD_DTYPE.itemsize
    if len(payload) != expected:
        raise CheckpointFormatError(
            f"{path}: payload is {len(payload)} bytes, manifest promises {expected}"
        )

    params = ParameterSet()
    offset = 0
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * _PAYLOAD_DTYPE.itemsize
        flat = np.frombuffer(payload[offset : offset + size], dtype=_PAYLOAD_DTYPE)
        offset += size
        array = np.asarray(flat.reshape(shape), dtype=T.active_dtype())
        params.add(entry["name"], array.copy(), trainable=bool(entry.get("trainable", True)))
    params.frozen = set(header.get("frozen", []))
    return params, header["configs"]


def save_model(model: TransformerModel, path, extra_configs: dict = None) -> None:
    configs = {"model": model.config.to_dict()}
    if extra_configs:
        configs.update(extra_configs)
    save_checkpoint(model.params, configs, path)


def load_model(path):
    """Rebuild a TransformerModel; the stored variant drives assembly.
    Returns (model, configs). Tensor names and shapes are validated
    against a fresh skeleton for the stored configuration."""
    params, configs = load_checkpoint(path)
    if "model" not in configs:
        raise CheckpointFormatError(f"{path}: header configs lack a 'model' section")
    config = ModelConfig.from_dict(configs["model"])
    skeleton = init_params(config, seed=0)
    expected = {name: t.data.shape for name, t in skeleton.items()}
    actual = {name: t.data.shape for name, t in params.items()}
    if expected != actual:
        missing = sorted(set(expected) - set(actual))
        surplus = sorted(set(actual) - set(expected))
        shapes = sorted(
            n for n in set(expected) & set(actual) if expected[n] != actual[n]
        )
        raise CheckpointFormatError(
            f"{path}: parameters do not fit the stored configuration "
            f"(missing={missing}, surplus={surplus}, shape-mismatch={shapes})"
        )
    return TransformerModel(config, params), configs


def checkpoint_digest(path) -> str:
    """SHA-256 of the checkpoint file, for frozen-artifact assertions."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

"""Binary checkpoint serialization for the U-Net.

Layout (all integers little-endian):

    magic "PSEG" | u32 format_version
    u32 n | n bytes of UTF-8 "key=value" lines (config; metadata keys
        carry a "meta." prefix)
    u32 array_count
    per array: u32 name_len | name | u8 rank | rank * u32 dims |
        prod(dims) * f32 payload

Stored arrays are the model parameters plus batch-norm running stats, so
a save/load round trip reproduces eval-mode forward passes bit-exactly.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .model import ModelConfig, UNet, build

MAGIC = b"PSEG"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


def save_checkpoint(model: UNet, metadata: dict | None = None) -> bytes:
    return write_checkpoint(model.config, metadata, model.named_arrays())


def write_checkpoint(config: ModelConfig, metadata: dict | None, arrays) -> bytes:
    """Serialize (config, metadata, named arrays) into the binary layout."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))

    lines = dict(config.to_lines())
    for k, v in (metadata or {}).items():
        lines[f"meta.{k}"] = str(v)
    header = "".join(f"{k}={v}\n" for k, v in lines.items()).encode("utf-8")
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)

    arrays = list(arrays)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def _read(stream: io.BytesIO, n: int) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CheckpointTruncatedError(
            f"checkpoint ends early: wanted {n} bytes, got {len(data)}")
    return data


def parse_checkpoint(data: bytes):
    """Split a checkpoint byte stream into (config, metadata, name->array)."""
    stream = io.BytesIO(data)
    if _read(stream, 4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    version = struct.unpack("<I", _read(stream, 4))[0]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint format_version {version}, expected {FORMAT_VERSION}")

    header_len = struct.unpack("<I", _read(stream, 4))[0]
    kv, metadata = {}, {}
    for line in _read(stream, header_len).decode("utf-8").splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if key.startswith("meta."):
            metadata[key[len("meta."):]] = value
        else:
            kv[key] = value
    try:
        config = ModelConfig.from_lines(kv)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad checkpoint config block: {exc}") from exc

    count = struct.unpack("<I", _read(stream, 4))[0]
    arrays = {}
    for _ in range(count):
        name_len = struct.unpack("<I", _read(stream, 4))[0]
        name = _read(stream, name_len).decode("utf-8")
        rank = struct.unpack("<B", _read(stream, 1))[0]
        shape = tuple(struct.unpack("<I", _read(stream, 4))[0] for _ in range(rank))
        n_elem = int(np.prod(shape)) if shape else 1
        payload = _read(stream, 4 * n_elem)
        arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return config, metadata, arrays


def load_checkpoint(data: bytes) -> tuple[UNet, dict]:
    """Rebuild the model and restore every stored array."""
    config, metadata, arrays = parse_checkpoint(data)
    model = build(config)
    expected = model.named_arrays()
    names = {name for name, _ in expected}
    missing = names - arrays.keys()
    if missing:
        raise CheckpointError(f"checkpoint missing arrays: {sorted(missing)[:5]}")
    _assign(expected, arrays)
    return model, metadata


def load_partial(model: UNet, data: bytes) -> list[str]:
    """Copy matching arrays into an existing model (backbone transfer).

    Arrays whose names are absent from the checkpoint keep their current
    (e.g. freshly initialized) values. Returns the names that were loaded.
    """
    _, _, arrays = parse_checkpoint(data)
    targets = [(name, arr) for name, arr in model.named_arrays() if name in arrays]
    _assign(targets, arrays)
    return [name for name, _ in targets]


def _assign(targets, arrays):
    for name, arr in targets:
        src = arrays[name]
        if src.shape != arr.shape:
            raise CheckpointShapeError(
                f"array {name!r}: checkpoint shape {src.shape} != model shape {arr.shape}")
    for name, arr in targets:
        arr[...] = arrays[name]

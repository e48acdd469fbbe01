"""
Binary checkpoint codec for neural model weights.

Layout (little-endian):
    magic        4 bytes  b"NGCK"
    version      uint8
    meta_len     uint32, then meta_len bytes of UTF-8 "key=value" lines
    n_tensors    uint32
    per tensor:
        name_len uint16, name bytes (UTF-8)
        ndim     uint8, dims uint32 * ndim
        data     float64 * prod(dims), row-major
"""

from struct import calcsize as struct_calcsize
from struct import pack as struct_pack
from struct import unpack_from as struct_unpack_from
from typing import Dict, Tuple

import numpy as np

from volatility.errors import ConfigError

CHECKPOINT_MAGIC = b"NGCK"
CHECKPOINT_VERSION = 1
ENDIAN = "<"


class CheckpointError(ConfigError):
    pass


def _encode_meta(meta: Dict[str, str]) -> bytes:
    lines = []
    for key in sorted(meta):
        value = str(meta[key])
        if "\n" in value or "=" in key:
            raise CheckpointError(f"Metadata entry '{key}' cannot be encoded")
        lines.append(f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _decode_meta(raw: bytes) -> Dict[str, str]:
    meta = {}
    for line in raw.decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        meta[key] = value
    return meta


def encode_checkpoint(tensors: Dict[str, np.ndarray], meta: Dict[str, str]) -> bytes:
    meta_bytes = _encode_meta(meta)
    chunks = [
        CHECKPOINT_MAGIC,
        struct_pack(ENDIAN + "B", CHECKPOINT_VERSION),
        struct_pack(ENDIAN + "I", len(meta_bytes)),
        meta_bytes,
        struct_pack(ENDIAN + "I", len(tensors)),
    ]
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype="<f8")
        name_bytes = name.encode("utf-8")
        chunks.append(struct_pack(ENDIAN + "H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct_pack(ENDIAN + "B", array.ndim))
        chunks.append(struct_pack(ENDIAN + "I" * array.ndim, *array.shape))
        chunks.append(array.tobytes(order="C"))
    return b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("Not a neural GARCH checkpoint (bad magic)")
    try:
        offset = 4
        (version,) = struct_unpack_from(ENDIAN + "B", blob, offset)
        offset += 1
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"Unsupported checkpoint version {version}")
        (meta_len,) = struct_unpack_from(ENDIAN + "I", blob, offset)
        offset += 4
        meta = _decode_meta(blob[offset : offset + meta_len])
        offset += meta_len
        (n_tensors,) = struct_unpack_from(ENDIAN + "I", blob, offset)
        offset += 4

        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct_unpack_from(ENDIAN + "H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct_unpack_from(ENDIAN + "B", blob, offset)
            offset += 1
            dims_fmt = ENDIAN + "I" * ndim
            dims = struct_unpack_from(dims_fmt, blob, offset)
            offset += struct_calcsize(dims_fmt)
            count = int(np.prod(dims, dtype=np.int64))
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            offset += 8 * count
            tensors[name] = data.reshape(dims).astype(float)
    except Exception as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"Truncated or corrupt checkpoint: {e}") from e
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes in checkpoint")
    return tensors, meta


def save_checkpoint(path: str, tensors: Dict[str, np.ndarray], meta: Dict[str, str]):
    with open(path, "wb") as f:
        f.write(encode_checkpoint(tensors, meta))


def load_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())

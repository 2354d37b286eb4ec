"""Binary feature store: header, contiguous little-endian float32 vectors,
then an (image id, identity) label table."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FVS1"


def _write_str(fh, s: str) -> None:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise ValueError("string too long for store format")
    fh.write(struct.pack("<H", len(data)))
    fh.write(data)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def save_feature_store(path, model_id: str, vectors: np.ndarray,
                       entries: list[tuple[str, str]]) -> None:
    """Write vectors (count x d float32) with their (image_id, identity) rows."""
    v = np.ascontiguousarray(np.asarray(vectors, dtype=np.float32))
    if v.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {v.shape}")
    if len(entries) != v.shape[0]:
        raise ValueError(f"{len(entries)} entries for {v.shape[0]} vectors")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _write_str(fh, model_id)
        fh.write(struct.pack("<II", v.shape[1], v.shape[0]))
        fh.write(v.astype("<f4").tobytes())
        for image_id, identity in entries:
            _write_str(fh, image_id)
            _write_str(fh, identity)


def load_feature_store(path) -> tuple[str, np.ndarray, list[tuple[str, str]]]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not a feature store")
        model_id = _read_str(fh)
        d, count = struct.unpack("<II", fh.read(8))
        vectors = np.frombuffer(fh.read(4 * d * count), dtype="<f4").reshape(count, d)
        entries = [(_read_str(fh), _read_str(fh)) for _ in range(count)]
    return model_id, vectors.copy(), entries

"""GFT exchange format writer (standalone, byte-exact).

Layout: "GFT1" magic, u32 LE rank, rank x u32 LE extents, then
prod(extents) float32 LE values, row-major. No padding, no checksum.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GFT1"


def write_gft(path: str | Path, arr: np.ndarray) -> Path:
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4", copy=False).tobytes())
    return path


def read_gft(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a GFT file")
    (rank,) = struct.unpack_from("<I", raw, 4)
    extents = struct.unpack_from(f"<{rank}I", raw, 8)
    count = int(np.prod(extents))
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=8 + 4 * rank)
    return values.reshape(extents).copy()


def gft_byte_size(shape: tuple[int, ...]) -> int:
    """Exact on-disk size for a tensor of the given shape."""
    n = 1
    for e in shape:
        n *= e
    return 4 + 4 + 4 * len(shape) + 4 * n

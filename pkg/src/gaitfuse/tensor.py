"""Dense float32 tensor value type and the GFT exchange file format.

Tensors are immutable rank-1..4 arrays, row-major, used for frames, feature
maps and parameters throughout the package.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "ValidationError",
    "tensor",
    "zeros",
    "full",
    "read_gft",
    "write_gft",
]

_GFT_MAGIC = b"GFT1"
_MAX_RANK = 4


class ValidationError(ValueError):
    """Raised when a value violates a structural contract."""


class ShapeError(ValidationError):
    """Raised when operand shapes are incompatible; names the offending axis."""


class Tensor:
    """Immutable dense float32 array with explicit shape, rank 1..4.

    The backing buffer is C-contiguous and marked read-only; share freely
    across threads.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray | Sequence, *, _trusted: np.ndarray | None = None):
        if _trusted is not None:
            self.data = _trusted
            return
        # own a copy: freezing must never propagate to the caller's buffer
        arr = np.array(data, dtype=np.float32, order="C", copy=True)
        if arr.ndim < 1 or arr.ndim > _MAX_RANK:
            raise ValidationError(f"tensor rank must be 1..{_MAX_RANK}, got {arr.ndim}")
        if any(e < 1 for e in arr.shape):
            raise ValidationError(f"tensor extents must be >= 1, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("tensor elements must be finite")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Wrap an op result without re-copying; caller guarantees the invariants."""
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        arr.flags.writeable = False
        return cls(None, _trusted=arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def tolist(self) -> list:
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:  # immutable, but identity hash is enough
        return id(self)


def tensor(values, shape: Iterable[int] | None = None) -> Tensor:
    """Build a Tensor from nested lists or a flat buffer plus a shape."""
    arr = np.asarray(values, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(tuple(shape))
    return Tensor(arr)


def zeros(shape: Iterable[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=np.float32))


def full(shape: Iterable[int], value: float) -> Tensor:
    return Tensor(np.full(tuple(shape), value, dtype=np.float32))


# ---------------------------------------------------------------------------
# GFT exchange format: "GFT1" magic, u32 LE rank, rank x u32 LE extents,
# then prod(extents) float32 LE values, row-major. No padding, no checksum.
# ---------------------------------------------------------------------------

def write_gft(path: str | Path, t: Tensor | np.ndarray) -> None:
    arr = t.data if isinstance(t, Tensor) else np.ascontiguousarray(t, dtype=np.float32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_GFT_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def read_gft(path: str | Path) -> Tensor:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != _GFT_MAGIC:
        raise ValidationError(f"{path}: not a GFT file (bad magic)")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if rank < 1 or rank > _MAX_RANK:
        raise ValidationError(f"{path}: rank {rank} outside 1..{_MAX_RANK}")
    header_end = 8 + 4 * rank
    if len(raw) < header_end:
        raise ValidationError(f"{path}: truncated header")
    extents = struct.unpack_from(f"<{rank}I", raw, 8)
    if any(e < 1 for e in extents):
        raise ValidationError(f"{path}: extents must be >= 1, got {extents}")
    count = int(np.prod(extents))
    expected = header_end + 4 * count
    if len(raw) != expected:
        raise ValidationError(
            f"{path}: payload is {len(raw) - header_end} bytes, expected {4 * count}"
        )
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=header_end)
    return Tensor(values.reshape(extents))

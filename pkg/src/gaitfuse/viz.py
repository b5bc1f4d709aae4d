"""Activation-map export: channel-mean heatmaps as binary PGM plus raw CSV."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import Tensor, ValidationError

__all__ = ["export_heatmap", "read_pgm"]

_DEGENERATE_RANGE = 1e-9


def export_heatmap(f: Tensor, path: str | Path) -> tuple[Path, Path]:
    """Write the channel-mean of an H x W x C map as an 8-bit PGM image.

    Values are min-max scaled to 0..255 (a constant map degenerates to all
    zeros, same guard as disparity normalization). The raw channel-mean
    values land next to the image as CSV. Returns (pgm_path, csv_path).
    """
    if f.rank != 3:
        raise ValidationError(f"heatmap input must be rank 3, got rank {f.rank}")
    mean_map = f.data.mean(axis=2, dtype=np.float64)
    lo, hi = float(mean_map.min()), float(mean_map.max())
    if hi - lo < _DEGENERATE_RANGE:
        quantized = np.zeros(mean_map.shape, dtype=np.uint8)
    else:
        scaled = (mean_map - lo) / (hi - lo) * 255.0
        quantized = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)

    path = Path(path)
    if path.suffix != ".pgm":
        path = path.with_suffix(".pgm")
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = quantized.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())

    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w") as fh:
        for row in mean_map:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path, csv_path


def read_pgm(path: str | Path) -> np.ndarray:
    """Read back a binary (P5) PGM written by export_heatmap."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValidationError(f"{path}: not a binary PGM")
    # header is exactly three whitespace-separated tokens after the magic
    parts = raw.split(b"\n", 3)
    if len(parts) < 4:
        raise ValidationError(f"{path}: truncated PGM header")
    w, h = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    if maxval != 255:
        raise ValidationError(f"{path}: expected 8-bit PGM, got maxval {maxval}")
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w)
    return pixels.reshape(h, w).copy()

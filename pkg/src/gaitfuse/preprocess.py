"""Raw RGB-D frame pairs -> aligned, normalized model inputs.

Depth is converted to disparity (reciprocal meters) and min-max normalized;
RGB is scaled to [0, 1]. Both modalities are cropped to the same subject
region when one is given (off-center subjects stay off-center) and
bilinear-resized to the model input size.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .tensor import ShapeError, Tensor, ValidationError

__all__ = [
    "Scope",
    "Box",
    "RawFramePair",
    "AlignedFramePair",
    "DepthRangeError",
    "depth_to_disparity",
    "disparity_extrema",
    "normalize_disparity",
    "normalize_rgb",
    "resize_bilinear",
    "align_pair",
    "align_sequence",
]

MIN_DEPTH_M = 0.1
_DEGENERATE_RANGE = 1e-9


class Scope(Enum):
    FRAME = "frame"
    SEQUENCE = "sequence"


class DepthRangeError(ValidationError):
    """A depth sample at or below the sensor floor; carries the first offender."""

    def __init__(self, flat_index: int, value: float, min_depth: float):
        self.flat_index = flat_index
        self.value = value
        super().__init__(
            f"depth frame rejected: pixel {flat_index} has depth {value:.6g} m "
            f"<= minimum {min_depth} m (sensor dropout?)"
        )


@dataclass(frozen=True)
class Box:
    """Axis-aligned pixel region shared by both modalities."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValidationError(f"region must have positive extent, got {self}")
        if self.x < 0 or self.y < 0:
            raise ValidationError(f"region origin must be non-negative, got {self}")


@dataclass
class RawFramePair:
    rgb: Tensor          # Hr x Wr x 3, values in [0, 255]
    depth_m: Tensor      # Hd x Wd x 1, meters
    timestamp_us: int = 0
    subject_region: Box | None = None


@dataclass
class AlignedFramePair:
    rgb: Tensor        # S x S x 3 in [0, 1]
    disparity: Tensor  # S x S x 1 in [0, 1]
    size: int = field(default=640)


def depth_to_disparity(depth_m: Tensor, min_depth_m: float = MIN_DEPTH_M) -> Tensor:
    """Element-wise reciprocal; rejects frames with depth at or below the floor."""
    d = depth_m.data
    bad = d <= min_depth_m
    if bad.any():
        i = int(np.argmax(bad.reshape(-1)))
        raise DepthRangeError(i, float(d.reshape(-1)[i]), min_depth_m)
    return Tensor._wrap(1.0 / d)


def disparity_extrema(frames: list[Tensor]) -> tuple[float, float]:
    """Pooled min/max over a sequence of disparity frames."""
    if not frames:
        raise ValidationError("cannot take extrema of an empty sequence")
    lo = min(float(f.data.min()) for f in frames)
    hi = max(float(f.data.max()) for f in frames)
    return lo, hi


def normalize_disparity(disp: Tensor, extrema: tuple[float, float] | None = None) -> Tensor:
    """Affine map of the scope extrema onto [0, 1].

    With no pooled extrema the frame's own min/max are used. A degenerate
    (constant) scope maps to all zeros.
    """
    lo, hi = extrema if extrema is not None else (float(disp.data.min()),
                                                  float(disp.data.max()))
    span = hi - lo
    if span < _DEGENERATE_RANGE:
        return Tensor._wrap(np.zeros_like(disp.data))
    out = (disp.data - lo) / span
    return Tensor._wrap(np.clip(out, 0.0, 1.0))


def normalize_rgb(rgb: Tensor) -> Tensor:
    """Scale 8-bit intensities to [0, 1]."""
    return Tensor._wrap(rgb.data / np.float32(255.0))


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample of an H x W x C array."""
    h, w, _ = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    rows = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    cols = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None, None]
    fc = (cols - c0)[None, :, None]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return (top * (1 - fr) + bot * fr).astype(img.dtype)


def _crop(arr: np.ndarray, box: Box, what: str) -> np.ndarray:
    h, w = arr.shape[0], arr.shape[1]
    if box.x + box.w > w or box.y + box.h > h:
        raise ShapeError(
            f"subject region {box} exceeds {what} frame extent {h}x{w}"
        )
    return arr[box.y: box.y + box.h, box.x: box.x + box.w]


def align_pair(pair: RawFramePair, size: int = 640,
               extrema: tuple[float, float] | None = None,
               min_depth_m: float = MIN_DEPTH_M) -> AlignedFramePair:
    """Crop both modalities to the shared region, resize, normalize.

    No re-centering happens: the subject's position inside the region is
    preserved by the plain crop + resize. Modalities must already share
    frame dimensions (registration is the capture side's job).
    """
    rgb, depth = pair.rgb.data, pair.depth_m.data
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"rgb frame must be HxWx3, got {rgb.shape}")
    if depth.ndim != 3 or depth.shape[2] != 1:
        raise ShapeError(f"depth frame must be HxWx1, got {depth.shape}")
    if rgb.shape[:2] != depth.shape[:2]:
        raise ShapeError(
            f"modalities must share frame dimensions after registration: "
            f"rgb {rgb.shape[:2]} vs depth {depth.shape[:2]}"
        )
    if pair.subject_region is not None:
        rgb = _crop(rgb, pair.subject_region, "rgb")
        depth = _crop(depth, pair.subject_region, "depth")
    rgb = resize_bilinear(rgb, size, size)
    depth = resize_bilinear(depth, size, size)
    disparity = depth_to_disparity(Tensor._wrap(depth), min_depth_m)
    return AlignedFramePair(
        rgb=normalize_rgb(Tensor._wrap(rgb)),
        disparity=normalize_disparity(disparity, extrema),
        size=size,
    )


def align_sequence(pairs: list[RawFramePair], size: int = 640,
                   scope: Scope = Scope.FRAME,
                   min_depth_m: float = MIN_DEPTH_M) -> list[AlignedFramePair]:
    """Align a whole sequence; sequence scope pools disparity extrema first."""
    if not pairs:
        return []
    ts = [p.timestamp_us for p in pairs]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValidationError("sequence timestamps must be strictly increasing")
    extrema = None
    if scope is Scope.SEQUENCE:
        disparities = []
        for p in pairs:
            depth = p.depth_m.data
            if p.subject_region is not None:
                depth = _crop(depth, p.subject_region, "depth")
            depth = resize_bilinear(depth, size, size)
            disparities.append(depth_to_disparity(Tensor._wrap(depth), min_depth_m))
        extrema = disparity_extrema(disparities)
    return [align_pair(p, size, extrema, min_depth_m) for p in pairs]

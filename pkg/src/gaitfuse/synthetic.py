"""Class-conditioned synthetic feature pyramids for desk-scale runs.

Each sample is a Gaussian bump at a class-specific position and amplitude on
a class-specific channel band, plus i.i.d. noise. The rgb and depth variants
share the bump but draw independent noise, so fusing the modalities is
informative. Everything is deterministic in the seed; sample i uses the
derived stream seed ^ i.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .head import GaitClass, N_CLASSES
from .model import Dims, REDUCED_DIMS
from .tensor import Tensor, ValidationError, read_gft, write_gft

__all__ = ["ClassSignal", "SynthConfig", "Sample", "gen_dataset",
           "write_dataset", "load_dataset", "split_dataset"]


@dataclass(frozen=True)
class ClassSignal:
    """Blob spec: center as (row, col) fractions, peak amplitude, width fraction."""

    center: tuple[float, float]
    amplitude: float
    width: float


DEFAULT_SIGNALS = {
    GaitClass.PD_LIKE: ClassSignal(center=(0.25, 0.25), amplitude=3.0, width=0.22),
    GaitClass.NORMAL: ClassSignal(center=(0.70, 0.60), amplitude=2.0, width=0.30),
    GaitClass.BACKGROUND: ClassSignal(center=(0.50, 0.80), amplitude=1.0, width=0.40),
}


@dataclass
class SynthConfig:
    dims: Dims = REDUCED_DIMS
    n_per_class: int = 300
    noise_sigma: float = 0.3
    seed: int = 2024
    class_signal: dict = field(default_factory=lambda: dict(DEFAULT_SIGNALS))

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_per_class < 1:
            raise ValidationError(f"n_per_class must be >= 1, got {self.n_per_class}")
        amps = [s.amplitude for s in self.class_signal.values()]
        if len(set(amps)) != len(amps):
            raise ValidationError("class amplitudes must be distinct")


Sample = tuple[Tensor, Tensor, Tensor, Tensor, int]


def _blob(h: int, w: int, c: int, signal: ClassSignal, band: slice) -> np.ndarray:
    rows = np.arange(h)[:, None] / max(h - 1, 1)
    cols = np.arange(w)[None, :] / max(w - 1, 1)
    r0, c0 = signal.center
    d2 = (rows - r0) ** 2 + (cols - c0) ** 2
    bump = signal.amplitude * np.exp(-d2 / (2.0 * signal.width ** 2))
    out = np.zeros((h, w, c), dtype=np.float32)
    out[:, :, band] = bump[:, :, None]
    return out


def _class_band(label: int, channels: int) -> slice:
    width = max(channels // N_CLASSES, 1)
    start = min(label * width, channels - width)
    return slice(start, start + width)


def gen_dataset(cfg: SynthConfig) -> list[Sample]:
    """Labeled list of (f4_rgb, f4_d, f5_rgb, f5_d, label), grouped by class."""
    d = cfg.dims
    samples: list[Sample] = []
    index = 0
    for label in range(N_CLASSES):
        signal = cfg.class_signal[GaitClass(label)]
        blob4 = _blob(d.h4, d.w4, d.c4, signal, _class_band(label, d.c4))
        blob5 = _blob(d.h5, d.w5, d.c5, signal, _class_band(label, d.c5))
        for _ in range(cfg.n_per_class):
            rng = np.random.default_rng(cfg.seed ^ index)
            mk = lambda blob: Tensor(
                (blob + rng.normal(0.0, cfg.noise_sigma, size=blob.shape)).astype(np.float32)
            ) if cfg.noise_sigma > 0 else Tensor(blob.copy())
            samples.append((mk(blob4), mk(blob4), mk(blob5), mk(blob5), label))
            index += 1
    return samples


def split_dataset(samples: list[Sample], val_fraction: float = 0.2,
                  seed: int = 7) -> tuple[list[Sample], list[Sample]]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_val = int(round(len(samples) * val_fraction))
    val_idx = set(order[:n_val].tolist())
    train = [samples[i] for i in range(len(samples)) if i not in val_idx]
    val = [samples[i] for i in range(len(samples)) if i in val_idx]
    return train, val


# ---------------------------------------------------------------------------
# On-disk layout: <seq>/f4_rgb/%06d.gft (etc.), labels.json, meta.json
# ---------------------------------------------------------------------------

_FEATURE_DIRS = ("f4_rgb", "f4_d", "f5_rgb", "f5_d")


def write_dataset(samples: list[Sample], directory: str | Path,
                  seq: str = "synthetic") -> Path:
    root = Path(directory) / seq
    labels = []
    for i, sample in enumerate(samples):
        for part, name in zip(sample[:4], _FEATURE_DIRS):
            write_gft(root / name / f"{i:06d}.gft", part)
        labels.append(int(sample[4]))
    (root / "labels.json").write_text(json.dumps(labels))
    meta = {
        "subject_id": seq,
        "symptoms": ["none_reported"],
        "capture": {"lighting": "normal", "occlusion": "none"},
        "frame_index": 0,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2))
    return root


def _resolve_sequence_dir(directory: str | Path, seq: str | None,
                          marker: str) -> Path:
    root = Path(directory)
    if seq is not None:
        return root / seq
    if (root / marker).exists():
        return root
    seqs = [p for p in sorted(root.iterdir()) if (p / marker).exists()]
    if len(seqs) != 1:
        raise ValidationError(
            f"{root}: expected exactly one sequence containing {marker}, "
            f"found {len(seqs)}"
        )
    return seqs[0]


def load_features(directory: str | Path, seq: str | None = None
                  ) -> list[tuple[Tensor, Tensor, Tensor, Tensor]]:
    """Unlabeled feature pyramids from the on-disk layout (inference input)."""
    root = _resolve_sequence_dir(directory, seq, _FEATURE_DIRS[0])
    frames = sorted((root / _FEATURE_DIRS[0]).glob("*.gft"))
    if not frames:
        raise ValidationError(f"{root}: no feature frames found")
    samples = []
    for f in frames:
        samples.append(tuple(read_gft(root / name / f.name) for name in _FEATURE_DIRS))
    return samples


def load_dataset(directory: str | Path, seq: str | None = None) -> list[Sample]:
    root = _resolve_sequence_dir(directory, seq, "labels.json")
    labels = json.loads((root / "labels.json").read_text())
    features = load_features(root)
    if len(labels) != len(features):
        raise ValidationError(
            f"{root}: {len(labels)} labels for {len(features)} feature frames"
        )
    return [(*parts, int(label)) for parts, label in zip(features, labels)]

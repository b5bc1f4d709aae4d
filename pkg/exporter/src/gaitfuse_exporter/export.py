"""Feature export: aligned RGB-D frames -> per-frame GFT pyramids + manifest.

Consumes the aligned dataset layout (<seq>/rgb/%06d.gft 640x640x3 in [0,1],
<seq>/disparity/%06d.gft 640x640x1) and writes the feature layout the fusion
engine loads (<seq>/f4_rgb/%06d.gft etc.), with a manifest carrying model
identity, tapped layers, shapes and a sha256 per written file.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbones import EXPECTED_F4, EXPECTED_F5, load_backbone
from .gft import read_gft, write_gft

FEATURE_KEYS = ("f4_rgb", "f4_d", "f5_rgb", "f5_d")


class ExportError(RuntimeError):
    pass


@dataclass
class ExportManifest:
    model_id: str
    revision: str
    f4_layer: str
    f5_layer: str
    input_size: int
    frame_count: int
    deterministic: bool
    files: dict = field(default_factory=dict)   # "f4_rgb/000000.gft" -> sha256
    shapes: dict = field(default_factory=dict)  # feature key -> [h, w, c]

    def to_json_dict(self) -> dict:
        return {
            "model_id": self.model_id, "revision": self.revision,
            "f4_layer": self.f4_layer, "f5_layer": self.f5_layer,
            "input_size": self.input_size, "frame_count": self.frame_count,
            "deterministic": self.deterministic,
            "shapes": self.shapes, "files": self.files,
        }


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _frame_tensor(path: Path, channels: int, size: int) -> torch.Tensor:
    arr = read_gft(path)
    if arr.ndim != 3 or arr.shape != (size, size, channels):
        raise ExportError(
            f"{path}: expected {size}x{size}x{channels} frame, got {arr.shape}"
        )
    chw = np.transpose(arr, (2, 0, 1))
    if channels == 1:
        chw = np.repeat(chw, 3, axis=0)  # disparity replicated across the RGB stem
    return torch.from_numpy(chw).unsqueeze(0)


def _to_hwc(feature: torch.Tensor) -> np.ndarray:
    if feature.ndim != 4 or feature.shape[0] != 1:
        raise ExportError(f"backbone returned unexpected tensor shape {tuple(feature.shape)}")
    return feature[0].permute(1, 2, 0).contiguous().numpy().astype(np.float32)


def _check_shape(name: str, arr: np.ndarray, expected: tuple[int, int, int],
                 strict: bool) -> None:
    if strict and arr.shape != expected:
        raise ExportError(
            f"{name} map has shape {arr.shape}, expected {expected} at 640 input"
        )


def export_features(frames_dir: str | Path, model_spec: str, out_dir: str | Path,
                    deterministic: bool = False, input_size: int = 640,
                    strict_shapes: bool | None = None) -> ExportManifest:
    """Run the backbone over both modalities and write the feature dataset.

    ``strict_shapes`` enforces the 640-input pyramid geometry
    (40x40x512 / 20x20x1024); by default it is on exactly when
    input_size == 640.
    """
    frames_dir, out_dir = Path(frames_dir), Path(out_dir)
    rgb_dir, disp_dir = frames_dir / "rgb", frames_dir / "disparity"
    if not rgb_dir.is_dir() or not disp_dir.is_dir():
        raise ExportError(f"{frames_dir}: expected rgb/ and disparity/ subdirectories")
    rgb_frames = sorted(rgb_dir.glob("*.gft"))
    if not rgb_frames:
        raise ExportError(f"{rgb_dir}: no GFT frames found")
    if strict_shapes is None:
        strict_shapes = input_size == 640

    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")

    backbone = load_backbone(model_spec)
    manifest = ExportManifest(
        model_id=backbone.model_id, revision=backbone.revision,
        f4_layer=backbone.f4_layer, f5_layer=backbone.f5_layer,
        input_size=input_size, frame_count=len(rgb_frames),
        deterministic=deterministic,
    )

    for i, rgb_path in enumerate(rgb_frames):
        disp_path = disp_dir / rgb_path.name
        if not disp_path.exists():
            raise ExportError(f"missing disparity frame for {rgb_path.name}")
        rgb = _frame_tensor(rgb_path, 3, input_size)
        disp = _frame_tensor(disp_path, 1, input_size)
        f4_rgb, f5_rgb = (_to_hwc(t) for t in backbone(rgb))
        f4_d, f5_d = (_to_hwc(t) for t in backbone(disp))
        _check_shape("stage-4 rgb", f4_rgb, EXPECTED_F4, strict_shapes)
        _check_shape("stage-5 rgb", f5_rgb, EXPECTED_F5, strict_shapes)
        _check_shape("stage-4 depth", f4_d, EXPECTED_F4, strict_shapes)
        _check_shape("stage-5 depth", f5_d, EXPECTED_F5, strict_shapes)
        for key, arr in zip(FEATURE_KEYS, (f4_rgb, f4_d, f5_rgb, f5_d)):
            rel = f"{key}/{i:06d}.gft"
            path = write_gft(out_dir / rel, arr)
            manifest.files[rel] = _sha256(path)
            manifest.shapes.setdefault(key, list(arr.shape))

    meta = frames_dir / "meta.json"
    if meta.exists():
        (out_dir / "meta.json").write_text(meta.read_text())
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True))
    return manifest


def verify_manifest(out_dir: str | Path) -> list[str]:
    """Re-hash every exported file; returns the list of mismatched paths."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    bad = []
    for rel, digest in manifest["files"].items():
        path = out_dir / rel
        if not path.exists() or _sha256(path) != digest:
            bad.append(rel)
    return bad

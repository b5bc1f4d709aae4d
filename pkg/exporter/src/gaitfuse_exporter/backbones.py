"""Backbone resolution: YOLOv11 weights, TorchScript modules, or a test stub.

Every backbone maps a (B, 3, S, S) float tensor in [0, 1] to two feature
maps: stage 4 at (B, C4, S/16, S/16) and stage 5 at (B, C5, S/32, S/32).
The standard regime at S=640 is (40, 40, 512) and (20, 20, 1024) per frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

EXPECTED_F4 = (40, 40, 512)
EXPECTED_F5 = (20, 20, 1024)


class BackboneError(RuntimeError):
    pass


@dataclass
class TappedBackbone:
    model_id: str
    revision: str
    f4_layer: str
    f5_layer: str
    run: object  # (tensor) -> (f4, f5) torch tensors, channels-first

    def __call__(self, frames: torch.Tensor):
        return self.run(frames)


class _StubBackbone(nn.Module):
    """Deterministic conv pyramid with the stage-4/5 geometry of the real net.

    Weight init is fixed by the seed, so identical inputs always produce
    identical feature maps; used for offline tests and dry runs.
    """

    def __init__(self, seed: int = 0, c4: int = 512, c5: int = 1024):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.stem = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.SiLU(),
        )
        self.f4_proj = nn.Conv2d(64, c4, 1)
        self.down = nn.Sequential(nn.Conv2d(64, 128, 3, stride=2, padding=1), nn.SiLU())
        self.f5_proj = nn.Conv2d(128, c5, 1)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.empty_like(p).normal_(0.0, 0.05, generator=gen))

    def forward(self, x):
        h = self.stem(x)
        f4 = self.f4_proj(h)
        f5 = self.f5_proj(self.down(h))
        return f4, f5


def _load_stub(arg: str) -> TappedBackbone:
    parts = arg.split(":")
    seed = int(parts[0]) if parts[0] else 0
    c4 = int(parts[1]) if len(parts) > 1 else 512
    c5 = int(parts[2]) if len(parts) > 2 else 1024
    net = _StubBackbone(seed, c4, c5).eval()

    def run(frames):
        with torch.no_grad():
            return net(frames)

    return TappedBackbone(model_id=f"stub-backbone-{seed}", revision="1",
                          f4_layer="f4_proj", f5_layer="f5_proj", run=run)


def _load_torchscript(path: str) -> TappedBackbone:
    try:
        module = torch.jit.load(path, map_location="cpu")
    except (OSError, RuntimeError, ValueError) as e:
        raise BackboneError(f"cannot load TorchScript backbone {path}: {e}") from e
    module.eval()

    def run(frames):
        with torch.no_grad():
            out = module(frames)
        if not (isinstance(out, (tuple, list)) and len(out) == 2):
            raise BackboneError(
                "TorchScript backbone must return a (stage4, stage5) pair"
            )
        return out[0], out[1]

    return TappedBackbone(model_id=f"torchscript:{path}", revision="1",
                          f4_layer="output[0]", f5_layer="output[1]", run=run)


def _load_ultralytics(weights: str) -> TappedBackbone:
    try:
        from ultralytics import YOLO  # noqa: PLC0415 - heavyweight optional dep
    except ImportError as e:
        raise BackboneError(
            "ultralytics is not installed; install it or use a torchscript:/stub: "
            "model spec"
        ) from e
    try:
        model = YOLO(weights)
    except (OSError, RuntimeError) as e:
        raise BackboneError(f"missing or unreadable weights {weights}: {e}") from e
    net = model.model.model  # the sequential backbone+head graph
    net.eval()

    # stage taps: the last layers producing /16 and /32 maps ahead of the neck
    taps: dict[str, torch.Tensor] = {}

    def make_hook(name):
        def hook(_module, _inp, out):
            taps[name] = out
        return hook

    f4_idx, f5_idx = 6, 9
    try:
        net[f4_idx].register_forward_hook(make_hook("f4"))
        net[f5_idx].register_forward_hook(make_hook("f5"))
    except (IndexError, TypeError) as e:
        raise BackboneError(
            f"backbone layers {f4_idx}/{f5_idx} not found in {weights}: {e}"
        ) from e

    def run(frames):
        taps.clear()
        with torch.no_grad():
            model.model(frames)
        if "f4" not in taps or "f5" not in taps:
            raise BackboneError("forward hooks produced no stage-4/5 maps "
                                "(layer-name mismatch)")
        return taps["f4"], taps["f5"]

    return TappedBackbone(model_id=f"yolov11:{weights}",
                          revision=str(getattr(model, "ckpt_path", weights)),
                          f4_layer=f"model.{f4_idx}", f5_layer=f"model.{f5_idx}",
                          run=run)


def load_backbone(spec: str) -> TappedBackbone:
    """Resolve a model spec: "stub:<seed>", "torchscript:<file>", or weights."""
    if spec.startswith("stub:"):
        return _load_stub(spec[len("stub:"):])
    if spec.startswith("torchscript:"):
        return _load_torchscript(spec[len("torchscript:"):])
    return _load_ultralytics(spec)

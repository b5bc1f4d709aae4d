"""Full fusion stack: extraction gates + neck + head, with dimension presets.

FusionParams bundles every learnable tensor; params.flatten addresses them
by dotted path for the optimizer, checkpoints and gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .head import HeadParams, Prediction, classify, consistency_graph, \
    init_head_params, logits_graph, pooled_graph
from .mlge import MlgeParams, init_mlge_params, mlge_global_graph, mlge_local_graph
from .neck import NeckParams, fuse_neck_graph, init_neck_params
from .params import lift
from .tensor import ShapeError, Tensor, ValidationError

__all__ = [
    "Dims",
    "STANDARD_DIMS",
    "REDUCED_DIMS",
    "FusionParams",
    "init_fusion_params",
    "forward_features",
    "predict",
    "sample_loss_graph",
]


@dataclass(frozen=True)
class Dims:
    """Feature pyramid extents: fine (h4, w4, c4) and coarse (h5, w5, c5)."""

    h4: int
    w4: int
    c4: int
    h5: int
    w5: int
    c5: int

    def violations(self, reduction: int = 4) -> list[str]:
        out = []
        for name in ("h4", "w4", "c4", "h5", "w5", "c5"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.h4 != 2 * self.h5 or self.w4 != 2 * self.w5:
            out.append(
                f"fine spatial extents must be twice the coarse ones: "
                f"({self.h4},{self.w4}) vs ({self.h5},{self.w5})"
            )
        if self.c4 % 2 != 0:
            out.append(f"c4 must be even for the block split, got {self.c4}")
        if self.c5 % 2 != 0:
            out.append(f"c5 must be even for the block split, got {self.c5}")
        if reduction < 1 or self.c5 % reduction != 0:
            out.append(f"c5={self.c5} must be divisible by the gate reduction {reduction}")
        return out

    def validate(self, reduction: int = 4) -> None:
        bad = self.violations(reduction)
        if bad:
            raise ValidationError("invalid dims: " + "; ".join(bad))

    @property
    def f4_shape(self) -> tuple[int, int, int]:
        return (self.h4, self.w4, self.c4)

    @property
    def f5_shape(self) -> tuple[int, int, int]:
        return (self.h5, self.w5, self.c5)


STANDARD_DIMS = Dims(40, 40, 512, 20, 20, 1024)
REDUCED_DIMS = Dims(10, 10, 16, 5, 5, 32)


@dataclass
class FusionParams:
    mlge: MlgeParams
    neck: NeckParams
    head: HeadParams


def init_fusion_params(dims: Dims, d_e: int = 256, reduction: int = 4,
                       seed: int = 0) -> FusionParams:
    dims.validate(reduction)
    rng = np.random.default_rng(seed)
    return FusionParams(
        mlge=init_mlge_params(dims.c4, dims.c5, reduction, rng),
        neck=init_neck_params(dims.c4, dims.c5, rng),
        head=init_head_params(dims.c4, dims.c5, d_e, rng),
    )


# ---------------------------------------------------------------------------
# Graph composition
# ---------------------------------------------------------------------------

def forward_graph(leaves: dict[str, Var], lifted: FusionParams,
                  inter: dict | None = None) -> tuple[Var, Var]:
    """Modality pyramids -> fused (fine, coarse) maps."""
    f4 = mlge_local_graph(leaves["f4_rgb"], leaves["f4_d"], lifted.mlge.local, inter)
    f5 = mlge_global_graph(leaves["f5_rgb"], leaves["f5_d"], lifted.mlge.global_, inter)
    return fuse_neck_graph(f4, f5, lifted.neck, inter)


def sample_loss_graph(leaves: dict[str, Var], lifted: FusionParams, label: int,
                      lambda_fr: float, inter: dict | None = None) -> Var:
    """Cross-entropy plus weighted modality-consistency penalty, as a scalar Var."""
    fine, coarse = forward_graph(leaves, lifted, inter)
    logits = logits_graph(pooled_graph(fine, coarse), lifted.head)
    if inter is not None:
        inter["logits"] = logits
    ce = ad.cross_entropy_logits(logits, label)
    if lambda_fr == 0.0:
        return ce
    reg = consistency_graph(leaves["f4_rgb"], leaves["f4_d"],
                            leaves["f5_rgb"], leaves["f5_d"])
    return ad.add(ce, ad.scale(reg, lambda_fr))


# ---------------------------------------------------------------------------
# Public inference
# ---------------------------------------------------------------------------

def _check_sample(f4_rgb: Tensor, f4_d: Tensor, f5_rgb: Tensor, f5_d: Tensor) -> None:
    if f4_rgb.shape != f4_d.shape:
        raise ShapeError(f"fine modality shapes differ: {f4_rgb.shape} vs {f4_d.shape}")
    if f5_rgb.shape != f5_d.shape:
        raise ShapeError(f"coarse modality shapes differ: {f5_rgb.shape} vs {f5_d.shape}")


def forward_features(f4_rgb: Tensor, f4_d: Tensor, f5_rgb: Tensor, f5_d: Tensor,
                     params: FusionParams,
                     trace: dict | None = None) -> tuple[Tensor, Tensor]:
    """Run the full extraction + neck stack; returns the fused (fine, coarse) maps."""
    _check_sample(f4_rgb, f4_d, f5_rgb, f5_d)
    lifted, _ = lift(params)
    leaves = {
        "f4_rgb": ad.leaf(f4_rgb.data), "f4_d": ad.leaf(f4_d.data),
        "f5_rgb": ad.leaf(f5_rgb.data), "f5_d": ad.leaf(f5_d.data),
    }
    inter: dict = {}
    fine, coarse = forward_graph(leaves, lifted, inter)
    if trace is not None:
        trace.update({k: Tensor(v.a) for k, v in inter.items()})
    return Tensor._wrap(fine.a), Tensor._wrap(coarse.a)


def predict(f4_rgb: Tensor, f4_d: Tensor, f5_rgb: Tensor, f5_d: Tensor,
            params: FusionParams) -> Prediction:
    fine, coarse = forward_features(f4_rgb, f4_d, f5_rgb, f5_d, params)
    return classify(fine, coarse, params.head)

"""Classification/embedding head and the training loss.

Both fused maps are pooled to channel vectors, concatenated, and projected
twice: once to the report embedding, once to 3-class logits. The training
loss is cross-entropy plus a modality-consistency penalty on the pooled
pre-fusion features.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .mlge import _dense_params
from .ops import DenseParams, softmax_fwd
from .params import lift
from .tensor import ShapeError, Tensor, ValidationError

__all__ = [
    "GaitClass",
    "HeadParams",
    "Prediction",
    "init_head_params",
    "embed",
    "classify",
    "fusion_loss",
    "pooled_graph",
    "embed_graph",
    "logits_graph",
]


class GaitClass(Enum):
    PD_LIKE = 0
    NORMAL = 1
    BACKGROUND = 2

    @property
    def display(self) -> str:
        return {"PD_LIKE": "PD-like", "NORMAL": "normal", "BACKGROUND": "background"}[self.name]

    @classmethod
    def from_index(cls, i: int) -> "GaitClass":
        return cls(i)


N_CLASSES = len(GaitClass)


@dataclass
class HeadParams:
    embed: DenseParams     # (C4+C5) -> d_e, no activation
    classify: DenseParams  # (C4+C5) -> 3, no activation

    def __post_init__(self):
        n = self.embed.weight.shape[0]
        if self.classify.weight.shape[0] != n:
            raise ValidationError(
                f"head input widths differ: embed {n} vs classify "
                f"{self.classify.weight.shape[0]}"
            )
        if self.classify.weight.shape[1] != N_CLASSES:
            raise ValidationError(
                f"classify head must output {N_CLASSES} logits, got "
                f"{self.classify.weight.shape[1]}"
            )
        if self.embed.activation != "none" or self.classify.activation != "none":
            raise ValidationError("head projections must be linear")

    @property
    def in_width(self) -> int:
        return self.embed.weight.shape[0]

    @property
    def d_e(self) -> int:
        return self.embed.weight.shape[1]


@dataclass
class Prediction:
    class_label: GaitClass
    probs: tuple[float, float, float]
    confidence: float
    embedding: Tensor

    def __post_init__(self):
        if len(self.probs) != N_CLASSES:
            raise ValidationError(f"expected {N_CLASSES} probabilities")
        total = sum(self.probs)
        if any(p < 0 for p in self.probs) or abs(total - 1.0) > 1e-6:
            raise ValidationError(f"probabilities must be a simplex point, got {self.probs}")
        if abs(self.confidence - max(self.probs)) > 1e-9:
            raise ValidationError("confidence must equal the max probability")


def init_head_params(c4: int, c5: int, d_e: int = 256,
                     rng: np.random.Generator | None = None) -> HeadParams:
    rng = rng or np.random.default_rng(0)
    width = c4 + c5
    return HeadParams(
        embed=_dense_params(rng, width, d_e, "none"),
        classify=_dense_params(rng, width, N_CLASSES, "none"),
    )


# ---------------------------------------------------------------------------
# Graph builders
# ---------------------------------------------------------------------------

def pooled_graph(f40: Var, f20: Var) -> Var:
    return ad.concat_vec(ad.global_avg_pool(f40), ad.global_avg_pool(f20))


def embed_graph(pooled: Var, p) -> Var:
    return ad.dense(pooled, p.embed.weight, p.embed.bias, "none")


def logits_graph(pooled: Var, p) -> Var:
    return ad.dense(pooled, p.classify.weight, p.classify.bias, "none")


def consistency_graph(f4_rgb: Var, f4_d: Var, f5_rgb: Var, f5_d: Var) -> Var:
    """Mean over the two scales of the squared pooled modality difference."""
    d4 = ad.sum_squares(ad.sub(ad.global_avg_pool(f4_rgb), ad.global_avg_pool(f4_d)))
    d5 = ad.sum_squares(ad.sub(ad.global_avg_pool(f5_rgb), ad.global_avg_pool(f5_d)))
    return ad.scale(ad.add(d4, d5), 0.5)


# ---------------------------------------------------------------------------
# Public ops
# ---------------------------------------------------------------------------

def _check_head_inputs(f40: Tensor, f20: Tensor, p: HeadParams) -> None:
    if f40.rank != 3 or f20.rank != 3:
        raise ShapeError("head inputs must be rank-3 feature maps")
    width = f40.shape[2] + f20.shape[2]
    if width != p.in_width:
        raise ShapeError(
            f"pooled width {f40.shape[2]}+{f20.shape[2]} != head input width {p.in_width}"
        )


def embed(f40: Tensor, f20: Tensor, p: HeadParams) -> Tensor:
    """Linear projection of the concatenated pooled maps to the report embedding."""
    _check_head_inputs(f40, f20, p)
    lifted, _ = lift(p)
    pooled = pooled_graph(ad.leaf(f40.data), ad.leaf(f20.data))
    return Tensor._wrap(embed_graph(pooled, lifted).a)


def classify(f40: Tensor, f20: Tensor, p: HeadParams) -> Prediction:
    """Softmax 3-class prediction with the embedding attached."""
    _check_head_inputs(f40, f20, p)
    lifted, _ = lift(p)
    pooled = pooled_graph(ad.leaf(f40.data), ad.leaf(f20.data))
    logits = logits_graph(pooled, lifted).a
    probs = softmax_fwd(logits.astype(np.float64))
    probs = probs / probs.sum()
    label = int(np.argmax(probs))
    e = embed_graph(pooled, lifted).a
    return Prediction(
        class_label=GaitClass.from_index(label),
        probs=tuple(float(v) for v in probs),
        confidence=float(probs.max()),
        embedding=Tensor._wrap(e),
    )


def fusion_loss(batch, fusion_params, lambda_fr: float = 0.1):
    """Mean training loss over a batch plus parameter gradients.

    Each batch element is (f4_rgb, f4_d, f5_rgb, f5_d, label). Returns
    (loss, {path: gradient array}). Gradients flow through the full
    extraction-neck-head chain; the consistency term reads the raw inputs.
    """
    from .model import sample_loss_graph  # local import: model composes this module

    if not batch:
        raise ValidationError("fusion_loss needs a non-empty batch")
    lifted, var_map = lift(fusion_params, trainable=True)
    total = 0.0
    scale_w = 1.0 / len(batch)
    for sample in batch:
        f4_rgb, f4_d, f5_rgb, f5_d, label = sample
        leaves = {
            "f4_rgb": ad.leaf(np.asarray(f4_rgb.data if isinstance(f4_rgb, Tensor) else f4_rgb)),
            "f4_d": ad.leaf(np.asarray(f4_d.data if isinstance(f4_d, Tensor) else f4_d)),
            "f5_rgb": ad.leaf(np.asarray(f5_rgb.data if isinstance(f5_rgb, Tensor) else f5_rgb)),
            "f5_d": ad.leaf(np.asarray(f5_d.data if isinstance(f5_d, Tensor) else f5_d)),
        }
        loss = sample_loss_graph(leaves, lifted, int(label), lambda_fr)
        total += float(loss.a) * scale_w
        ad.backward(loss, np.asarray(scale_w, dtype=loss.a.dtype))
    grads = {path: (v.grad if v.grad is not None else np.zeros_like(v.a))
             for path, v in var_map.items() if v.requires}
    return total, grads

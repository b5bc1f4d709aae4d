"""Cross-spatial neck fusion producing the two fused output scales.

The coarse map runs through serial-maxpool pyramid pooling (spff) and a
mean/max spatial attention gate (c2psa); both scales are then mixed by
split-bottleneck-merge convolution blocks (c3k2) after upsampling or learned
downsampling, yielding a fine map with the fine channel count and a coarse
map with the coarse channel count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .mlge import _bn_params, _conv_params
from .ops import BnParams, ConvParams
from .params import lift
from .tensor import ShapeError, Tensor, ValidationError

__all__ = [
    "SpffParams",
    "C2psaParams",
    "BottleneckParams",
    "C3k2Params",
    "NeckParams",
    "init_neck_params",
    "spff",
    "c2psa",
    "c3k2",
    "fuse_neck",
    "spff_graph",
    "c2psa_graph",
    "c3k2_graph",
    "fuse_neck_graph",
]


@dataclass
class SpffParams:
    pre: ConvParams   # 1x1, C -> C/2
    post: ConvParams  # 1x1, 2C -> C

    def __post_init__(self):
        c = self.pre.kernel.shape[2]
        if self.pre.kernel.shape[3] * 2 != c:
            raise ValidationError(
                f"spff pre conv must halve channels, got {c} -> {self.pre.kernel.shape[3]}"
            )
        if self.post.kernel.shape[2] != 2 * c or self.post.kernel.shape[3] != c:
            raise ValidationError(
                f"spff post conv must map 2*{c} -> {c}, got "
                f"{self.post.kernel.shape[2]} -> {self.post.kernel.shape[3]}"
            )


@dataclass
class C2psaParams:
    spatial_conv: ConvParams  # 7x7, 2 -> 1, pad 3

    def __post_init__(self):
        k = self.spatial_conv.kernel
        if k.shape[:3] != (7, 7, 2) or k.shape[3] != 1 or self.spatial_conv.padding != 3:
            raise ValidationError(
                f"spatial attention conv must be 7x7, 2->1, pad 3; got kernel "
                f"{k.shape} pad {self.spatial_conv.padding}"
            )


@dataclass
class BottleneckParams:
    conv: ConvParams  # 3x3, Ch/2 -> Ch/2, pad 1
    bn: BnParams


@dataclass
class C3k2Params:
    split: ConvParams  # 1x1, Cin -> Ch
    b1: BottleneckParams
    b2: BottleneckParams
    merge: ConvParams  # 1x1, 3*Ch/2 -> Cout

    def __post_init__(self):
        ch = self.split.kernel.shape[3]
        if ch % 2 != 0:
            raise ValidationError(f"c3k2 internal width {ch} must be even")
        half = ch // 2
        for name, b in (("b1", self.b1), ("b2", self.b2)):
            ks = b.conv.kernel.shape
            if ks != (3, 3, half, half) or b.conv.padding != 1:
                raise ValidationError(
                    f"c3k2 {name} conv must be 3x3 {half}->{half} pad 1, got {ks}"
                )
        if self.merge.kernel.shape[2] != 3 * half:
            raise ValidationError(
                f"c3k2 merge input channels {self.merge.kernel.shape[2]} != 3*{half}"
            )

    @property
    def in_channels(self) -> int:
        return self.split.kernel.shape[2]

    @property
    def out_channels(self) -> int:
        return self.merge.kernel.shape[3]


@dataclass
class NeckParams:
    spff: SpffParams
    c2psa: C2psaParams
    c3k2_40: C3k2Params
    c3k2_20: C3k2Params
    reduce: ConvParams  # 1x1, C5 -> C4, applied after upsampling
    down4: ConvParams   # 2x2, C4 -> C4, stride 2: learned downsample of the fine map

    def __post_init__(self):
        c5 = self.spff.pre.kernel.shape[2]
        c4 = self.reduce.kernel.shape[3]
        problems = []
        if self.reduce.kernel.shape[2] != c5:
            problems.append(f"reduce conv input {self.reduce.kernel.shape[2]} != {c5}")
        if self.down4.kernel.shape[2] != c4 or self.down4.kernel.shape[3] != c4:
            problems.append("downsample conv must preserve fine channel count")
        if self.down4.stride != 2:
            problems.append(f"downsample conv stride must be 2, got {self.down4.stride}")
        if self.c3k2_40.in_channels != 2 * c4:
            problems.append(
                f"fine-scale block input {self.c3k2_40.in_channels} != 2*{c4}"
            )
        if self.c3k2_40.out_channels != c4:
            problems.append(f"fine-scale block output {self.c3k2_40.out_channels} != {c4}")
        if self.c3k2_20.in_channels != c4 + c5:
            problems.append(
                f"coarse-scale block input {self.c3k2_20.in_channels} != {c4}+{c5}"
            )
        if self.c3k2_20.out_channels != c5:
            problems.append(f"coarse-scale block output {self.c3k2_20.out_channels} != {c5}")
        if problems:
            raise ValidationError("neck channel chains do not close: " + "; ".join(problems))

    @property
    def c4(self) -> int:
        return self.reduce.kernel.shape[3]

    @property
    def c5(self) -> int:
        return self.spff.pre.kernel.shape[2]


def _init_c3k2(rng, cin: int, cout: int) -> C3k2Params:
    half = cout // 2
    return C3k2Params(
        split=_conv_params(rng, 1, 1, cin, cout),
        b1=BottleneckParams(conv=_conv_params(rng, 3, 3, half, half, padding=1),
                            bn=_bn_params(half)),
        b2=BottleneckParams(conv=_conv_params(rng, 3, 3, half, half, padding=1),
                            bn=_bn_params(half)),
        merge=_conv_params(rng, 1, 1, 3 * half, cout),
    )


def init_neck_params(c4: int, c5: int, rng: np.random.Generator | None = None) -> NeckParams:
    rng = rng or np.random.default_rng(0)
    if c5 % 2 != 0 or c4 % 2 != 0:
        raise ValidationError(f"channel counts must be even, got c4={c4}, c5={c5}")
    return NeckParams(
        spff=SpffParams(pre=_conv_params(rng, 1, 1, c5, c5 // 2),
                        post=_conv_params(rng, 1, 1, 2 * c5, c5)),
        c2psa=C2psaParams(spatial_conv=_conv_params(rng, 7, 7, 2, 1, padding=3)),
        c3k2_40=_init_c3k2(rng, 2 * c4, c4),
        c3k2_20=_init_c3k2(rng, c4 + c5, c5),
        reduce=_conv_params(rng, 1, 1, c5, c4),
        down4=_conv_params(rng, 2, 2, c4, c4, stride=2, padding=0),
    )


# ---------------------------------------------------------------------------
# Graph builders
# ---------------------------------------------------------------------------

def _conv_v(x: Var, p) -> Var:
    return ad.conv2d(x, p.kernel, p.bias, p.stride, p.padding)


def spff_graph(f5: Var, p, inter: dict | None = None, key: str = "neck.spff") -> Var:
    x = _conv_v(f5, p.pre)
    m1 = ad.maxpool(x, 5, 1, 2)
    m2 = ad.maxpool(m1, 5, 1, 2)
    m3 = ad.maxpool(m2, 5, 1, 2)
    cat = ad.concat_channels(ad.concat_channels(x, m1), ad.concat_channels(m2, m3))
    out = _conv_v(cat, p.post)
    if inter is not None:
        inter[f"{key}.out"] = out
    return out


def c2psa_graph(f: Var, p, inter: dict | None = None, key: str = "neck.c2psa") -> Var:
    stats = ad.concat_channels(ad.channel_mean(f), ad.channel_max(f))
    attention = ad.sigmoid(_conv_v(stats, p.spatial_conv))
    out = ad.mul_map(f, attention)
    if inter is not None:
        inter[f"{key}.attention"] = attention
        inter[f"{key}.out"] = out
    return out


def c3k2_graph(f: Var, p, inter: dict | None = None, key: str = "neck.c3k2") -> Var:
    y = _conv_v(f, p.split)
    half = p.split.kernel.shape[3] // 2
    a = ad.slice_channels(y, 0, half)
    b = ad.slice_channels(y, half, 2 * half)

    def stage(x: Var, bp, name: str) -> Var:
        c = _conv_v(x, bp.conv)
        if inter is not None:
            inter[f"{key}.{name}.bn.in"] = c
        r = ad.bn_relu(c, bp.bn.gamma, bp.bn.beta, bp.bn.running_mean.a,
                       bp.bn.running_var.a, bp.bn.epsilon)
        return ad.add(x, r)

    chain = stage(stage(b, p.b1, "b1"), p.b2, "b2")
    out = _conv_v(ad.concat_channels(ad.concat_channels(a, b), chain), p.merge)
    if inter is not None:
        inter[f"{key}.out"] = out
    return out


def fuse_neck_graph(f4: Var, f5: Var, p, inter: dict | None = None,
                    key: str = "neck") -> tuple[Var, Var]:
    up = ad.upsample2_nearest(f5)
    reduced = _conv_v(up, p.reduce)
    fine = c3k2_graph(ad.concat_channels(reduced, f4), p.c3k2_40, inter,
                      f"{key}.c3k2_40")
    pooled = spff_graph(f5, p.spff, inter, f"{key}.spff")
    attended = c2psa_graph(pooled, p.c2psa, inter, f"{key}.c2psa")
    down = _conv_v(f4, p.down4)
    coarse = c3k2_graph(ad.concat_channels(attended, down), p.c3k2_20, inter,
                        f"{key}.c3k2_20")
    if inter is not None:
        inter[f"{key}.f40"] = fine
        inter[f"{key}.f20"] = coarse
    return fine, coarse


# ---------------------------------------------------------------------------
# Public Tensor-level ops
# ---------------------------------------------------------------------------

def spff(f5: Tensor, p: SpffParams) -> Tensor:
    """Serial 5x5 max pools concatenated and re-projected; shape preserved."""
    if f5.rank != 3 or f5.shape[2] != p.pre.kernel.shape[2]:
        raise ShapeError(
            f"spff input must be HxWx{p.pre.kernel.shape[2]}, got {f5.shape}"
        )
    lifted, _ = lift(p)
    return Tensor._wrap(spff_graph(ad.leaf(f5.data), lifted).a)


def c2psa(f: Tensor, p: C2psaParams) -> Tensor:
    """Mean/max spatial attention gate; shape preserved."""
    if f.rank != 3:
        raise ShapeError(f"c2psa input must be rank 3, got rank {f.rank}")
    lifted, _ = lift(p)
    return Tensor._wrap(c2psa_graph(ad.leaf(f.data), lifted).a)


def c3k2(f: Tensor, p: C3k2Params) -> Tensor:
    """Split-bottleneck-merge convolution block."""
    if f.rank != 3 or f.shape[2] != p.in_channels:
        raise ShapeError(f"c3k2 input must be HxWx{p.in_channels}, got {f.shape}")
    lifted, _ = lift(p)
    return Tensor._wrap(c3k2_graph(ad.leaf(f.data), lifted).a)


def fuse_neck(f4_fused: Tensor, f5_fused: Tensor, p: NeckParams,
              trace: dict | None = None) -> tuple[Tensor, Tensor]:
    """Produce the two fused scales from the gated modality features.

    The fine map must be spatially exactly twice the coarse map. Output
    shapes are (H4, W4, C4) and (H5, W5, C5).
    """
    if f4_fused.rank != 3 or f5_fused.rank != 3:
        raise ShapeError("fuse_neck expects rank-3 feature maps")
    if (f4_fused.shape[0] != 2 * f5_fused.shape[0]
            or f4_fused.shape[1] != 2 * f5_fused.shape[1]):
        raise ShapeError(
            f"fuse_neck spatial ratio must be exactly 2: fine {f4_fused.shape[:2]} "
            f"vs coarse {f5_fused.shape[:2]}"
        )
    if f4_fused.shape[2] != p.c4:
        raise ShapeError(f"fine map channel axis {f4_fused.shape[2]} != {p.c4}")
    if f5_fused.shape[2] != p.c5:
        raise ShapeError(f"coarse map channel axis {f5_fused.shape[2]} != {p.c5}")
    lifted, _ = lift(p)
    inter: dict = {}
    fine, coarse = fuse_neck_graph(ad.leaf(f4_fused.data), ad.leaf(f5_fused.data),
                                   lifted, inter)
    if trace is not None:
        trace.update({k: Tensor(v.a) for k, v in inter.items()})
    return Tensor._wrap(fine.a), Tensor._wrap(coarse.a)

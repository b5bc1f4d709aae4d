"""Multi-scale local/global extraction: gated fusion of per-modality features.

Two parallel paths fuse an RGB/depth feature pair before the neck. The local
path sums the fine-scale maps, refines them through two BN-ReLU convolutions
and multiplies the result back onto the sum. The global path sums the coarse
maps, squeezes them through pooling plus a two-layer dense attention block and
gates the sum per channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .ops import BnParams, ConvParams, DenseParams
from .params import lift
from .tensor import ShapeError, Tensor, ValidationError

__all__ = [
    "MlgeLocalParams",
    "MlgeGlobalParams",
    "MlgeParams",
    "init_mlge_params",
    "mlge_local",
    "mlge_global",
    "mlge",
    "mlge_local_graph",
    "mlge_global_graph",
]


@dataclass
class MlgeLocalParams:
    conv1: ConvParams  # 1x1, C4 -> C4
    bn1: BnParams
    conv3: ConvParams  # 3x3, C4 -> C4, pad 1
    bn2: BnParams

    def __post_init__(self):
        c = self.conv1.kernel.shape[2]
        checks = [
            (self.conv1.kernel.shape[:2] == (1, 1), "conv1 must be 1x1"),
            (self.conv1.kernel.shape[3] == c, "conv1 must preserve channels"),
            (self.conv3.kernel.shape[:2] == (3, 3), "conv3 must be 3x3"),
            (self.conv3.padding == 1, "conv3 must pad by 1"),
            (self.conv3.kernel.shape[2] == c and self.conv3.kernel.shape[3] == c,
             "conv3 must preserve channels"),
            (self.bn1.gamma.shape[0] == c and self.bn2.gamma.shape[0] == c,
             "bn channel count must match convs"),
        ]
        bad = [msg for ok, msg in checks if not ok]
        if bad:
            raise ValidationError("local path params invalid: " + "; ".join(bad))


@dataclass
class MlgeGlobalParams:
    dense1: DenseParams  # C5 -> C5/r, relu
    dense2: DenseParams  # C5/r -> C5, sigmoid

    def __post_init__(self):
        c5, hidden = self.dense1.weight.shape
        if self.dense2.weight.shape != (hidden, c5):
            raise ValidationError(
                f"global gate does not close: dense1 {self.dense1.weight.shape} "
                f"vs dense2 {self.dense2.weight.shape}"
            )
        if self.dense1.activation != "relu" or self.dense2.activation != "sigmoid":
            raise ValidationError("global gate requires relu then sigmoid activations")


@dataclass
class MlgeParams:
    local: MlgeLocalParams
    global_: MlgeGlobalParams
    reduction: int = 4

    def __post_init__(self):
        c5, hidden = self.global_.dense1.weight.shape
        if self.reduction < 1 or c5 % self.reduction != 0:
            raise ValidationError(
                f"channel count {c5} not divisible by reduction {self.reduction}"
            )
        if hidden != c5 // self.reduction:
            raise ValidationError(
                f"global gate hidden width {hidden} != {c5} / r={self.reduction}"
            )


def _conv_params(rng, kh, kw, cin, cout, stride=1, padding=0, gain=2.0) -> ConvParams:
    std = float(np.sqrt(gain / (kh * kw * cin)))
    kernel = Tensor(rng.normal(0.0, std, size=(kh, kw, cin, cout)).astype(np.float32))
    return ConvParams(kernel=kernel, bias=Tensor(np.zeros(cout, dtype=np.float32)),
                      stride=stride, padding=padding)


def _bn_params(c: int) -> BnParams:
    return BnParams(
        gamma=Tensor(np.ones(c, dtype=np.float32)),
        beta=Tensor(np.zeros(c, dtype=np.float32)),
        running_mean=Tensor(np.zeros(c, dtype=np.float32)),
        running_var=Tensor(np.ones(c, dtype=np.float32)),
    )


def _dense_params(rng, n, m, activation, gain=1.0) -> DenseParams:
    std = float(np.sqrt(gain / n))
    weight = Tensor(rng.normal(0.0, std, size=(n, m)).astype(np.float32))
    return DenseParams(weight=weight, bias=Tensor(np.zeros(m, dtype=np.float32)),
                       activation=activation)


def init_mlge_params(c4: int, c5: int, reduction: int = 4,
                     rng: np.random.Generator | None = None) -> MlgeParams:
    rng = rng or np.random.default_rng(0)
    if c5 % reduction != 0:
        raise ValidationError(f"channel count {c5} not divisible by reduction {reduction}")
    local = MlgeLocalParams(
        conv1=_conv_params(rng, 1, 1, c4, c4),
        bn1=_bn_params(c4),
        conv3=_conv_params(rng, 3, 3, c4, c4, padding=1),
        bn2=_bn_params(c4),
    )
    hidden = c5 // reduction
    global_ = MlgeGlobalParams(
        dense1=_dense_params(rng, c5, hidden, "relu", gain=2.0),
        dense2=_dense_params(rng, hidden, c5, "sigmoid", gain=1.0),
    )
    return MlgeParams(local=local, global_=global_, reduction=reduction)


# ---------------------------------------------------------------------------
# Graph builders (Var leaves); intermediates land in `inter` under `key`
# ---------------------------------------------------------------------------

def _bn_relu_v(x: Var, bn, inter, name) -> Var:
    if inter is not None:
        inter[name] = x  # pre-normalization activations, used for stat updates
    return ad.bn_relu(x, bn.gamma, bn.beta, bn.running_mean.a, bn.running_var.a,
                      bn.epsilon)


def mlge_local_graph(x_rgb: Var, x_d: Var, p, inter: dict | None = None,
                     key: str = "mlge.local") -> Var:
    combined = ad.add(x_rgb, x_d)
    c1 = ad.conv2d(combined, p.conv1.kernel, p.conv1.bias, p.conv1.stride, p.conv1.padding)
    r1 = _bn_relu_v(c1, p.bn1, inter, f"{key}.bn1.in")
    c3 = ad.conv2d(r1, p.conv3.kernel, p.conv3.bias, p.conv3.stride, p.conv3.padding)
    gate = _bn_relu_v(c3, p.bn2, inter, f"{key}.bn2.in")
    out = ad.mul(gate, combined)
    if inter is not None:
        inter[f"{key}.sum"] = combined
        inter[f"{key}.gate"] = gate
        inter[f"{key}.out"] = out
    return out


def mlge_global_graph(x_rgb: Var, x_d: Var, p, inter: dict | None = None,
                      key: str = "mlge.global") -> Var:
    combined = ad.add(x_rgb, x_d)
    pooled = ad.global_avg_pool(combined)
    hidden = ad.dense(pooled, p.dense1.weight, p.dense1.bias, p.dense1.activation)
    gate = ad.dense(hidden, p.dense2.weight, p.dense2.bias, p.dense2.activation)
    out = ad.mul(combined, gate)
    if inter is not None:
        inter[f"{key}.sum"] = combined
        inter[f"{key}.pooled"] = pooled
        inter[f"{key}.gate"] = gate
        inter[f"{key}.out"] = out
    return out


# ---------------------------------------------------------------------------
# Public Tensor-level ops
# ---------------------------------------------------------------------------

def _check_pair(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: modality shapes differ, {a.shape} vs {b.shape}")
    if a.rank != 3:
        raise ShapeError(f"{what}: expected rank-3 feature maps, got rank {a.rank}")


def mlge_local(f4_rgb: Tensor, f4_d: Tensor, p: MlgeParams,
               trace: dict | None = None) -> Tensor:
    """Fine-scale path: sum modalities, conv-refine, multiply back onto the sum."""
    _check_pair(f4_rgb, f4_d, "mlge_local")
    if f4_rgb.shape[2] != p.local.conv1.kernel.shape[2]:
        raise ShapeError(
            f"mlge_local channel axis: input has {f4_rgb.shape[2]} channels, "
            f"params expect {p.local.conv1.kernel.shape[2]}"
        )
    lifted, _ = lift(p.local)
    inter: dict = {}
    out = mlge_local_graph(ad.leaf(f4_rgb.data), ad.leaf(f4_d.data), lifted, inter)
    if trace is not None:
        trace.update({k: Tensor(v.a) for k, v in inter.items()})
    return Tensor._wrap(out.a)


def mlge_global(f5_rgb: Tensor, f5_d: Tensor, p: MlgeParams,
                trace: dict | None = None) -> Tensor:
    """Coarse-scale path: sum modalities, pool, dense gate per channel."""
    _check_pair(f5_rgb, f5_d, "mlge_global")
    if f5_rgb.shape[2] != p.global_.dense1.weight.shape[0]:
        raise ShapeError(
            f"mlge_global channel axis: input has {f5_rgb.shape[2]} channels, "
            f"params expect {p.global_.dense1.weight.shape[0]}"
        )
    lifted, _ = lift(p.global_)
    inter: dict = {}
    out = mlge_global_graph(ad.leaf(f5_rgb.data), ad.leaf(f5_d.data), lifted, inter)
    if trace is not None:
        trace.update({k: Tensor(v.a) for k, v in inter.items()})
    return Tensor._wrap(out.a)


def mlge(f4_pair: tuple[Tensor, Tensor], f5_pair: tuple[Tensor, Tensor],
         p: MlgeParams) -> tuple[Tensor, Tensor]:
    """Apply both paths to the (rgb, depth) pairs; shapes are preserved."""
    f4 = mlge_local(f4_pair[0], f4_pair[1], p)
    f5 = mlge_global(f5_pair[0], f5_pair[1], p)
    return f4, f5

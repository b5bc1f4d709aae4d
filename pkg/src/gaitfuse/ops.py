"""Forward kernels and their vector-Jacobian products.

Every op exists twice: a vectorized array-level kernel (production path,
dtype-preserving so the float64 checking mode reuses it) and a matching VJP.
Tensor-level wrappers validate shapes and are the public surface.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, ValidationError

Activation = Literal["relu", "sigmoid", "none"]

__all__ = [
    "ConvParams",
    "BnParams",
    "DenseParams",
    "conv2d",
    "bn_relu",
    "global_avg_pool",
    "dense",
    "upsample2_nearest",
    "maxpool",
    "concat_channels",
    "ewise_add",
    "ewise_mul",
    "softmax",
    "conv_out_extent",
    "vjp",
    "VJP_OPS",
]


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass
class ConvParams:
    """2-D convolution parameters: kernel[k,k,Cin,Cout], bias[Cout], stride, zero padding."""

    kernel: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel.rank != 4:
            raise ValidationError(f"conv kernel must be rank 4, got {self.kernel.rank}")
        kh, kw, _cin, cout = self.kernel.shape
        if kh < 1 or kw < 1:
            raise ValidationError(f"kernel extent must be >= 1, got {kh}x{kw}")
        if self.bias.shape != (cout,):
            raise ShapeError(
                f"conv bias length {self.bias.shape[0]} != kernel output channels {cout}"
            )
        if self.stride < 1:
            raise ValidationError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValidationError(f"padding must be >= 0, got {self.padding}")


@dataclass
class BnParams:
    """Inference-mode batch norm: per-channel affine with running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    epsilon: float = 1e-5

    def __post_init__(self):
        c = self.gamma.shape[0]
        for name in ("beta", "running_mean", "running_var"):
            t = getattr(self, name)
            if t.shape != (c,):
                raise ShapeError(f"bn {name} length {t.shape[0]} != gamma length {c}")
        if self.epsilon <= 0:
            raise ValidationError(f"bn epsilon must be > 0, got {self.epsilon}")
        if (self.running_var.data < 0).any():
            raise ValidationError("bn running_var elements must be >= 0")


@dataclass
class DenseParams:
    """Fully connected layer: weight[n,m], bias[m], optional activation."""

    weight: Tensor
    bias: Tensor
    activation: Activation = "none"

    def __post_init__(self):
        if self.weight.rank != 2:
            raise ValidationError(f"dense weight must be rank 2, got {self.weight.rank}")
        m = self.weight.shape[1]
        if self.bias.shape != (m,):
            raise ShapeError(f"dense bias length {self.bias.shape[0]} != weight columns {m}")
        if self.activation not in ("relu", "sigmoid", "none"):
            raise ValidationError(f"unknown activation {self.activation!r}")


def conv_out_extent(extent: int, k: int, stride: int, padding: int) -> int:
    """Output extent (extent + 2*padding - k)/stride + 1; rejects non-integer results."""
    span = extent + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"conv geometry invalid on axis of extent {extent}: "
            f"(H + 2*{padding} - {k}) = {span} is not a non-negative multiple of stride {stride}"
        )
    out = span // stride + 1
    if out < 1:
        raise ShapeError(f"conv output extent {out} < 1 on axis of extent {extent}")
    return out


# ---------------------------------------------------------------------------
# Array-level forward kernels (dtype preserving)
# ---------------------------------------------------------------------------

def _conv_cols(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """im2col: padded input -> (H', W', kh*kw*Cin) patch matrix."""
    hp, wp = x.shape[0] + 2 * padding, x.shape[1] + 2 * padding
    xp = np.zeros((hp, wp, x.shape[2]), dtype=x.dtype)
    xp[padding: padding + x.shape[0], padding: padding + x.shape[1]] = x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (hp-kh+1, wp-kw+1, C, kh, kw)
    win = win[::stride, ::stride]
    h_out, w_out = win.shape[0], win.shape[1]
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(h_out, w_out, -1)
    return xp, cols


def conv2d_fwd(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
               stride: int, padding: int) -> np.ndarray:
    kh, kw, cin, cout = kernel.shape
    h_out = conv_out_extent(x.shape[0], kh, stride, padding)
    w_out = conv_out_extent(x.shape[1], kw, stride, padding)
    _, cols = _conv_cols(x, kh, kw, stride, padding)
    out = cols.reshape(h_out * w_out, -1) @ kernel.reshape(-1, cout)
    return out.reshape(h_out, w_out, cout) + bias


def conv2d_vjp(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
               stride: int, padding: int, upstream: np.ndarray):
    kh, kw, cin, cout = kernel.shape
    h_out, w_out = upstream.shape[0], upstream.shape[1]
    xp, cols = _conv_cols(x, kh, kw, stride, padding)
    u_flat = upstream.reshape(h_out * w_out, cout)
    d_bias = upstream.sum(axis=(0, 1))
    d_kernel = (cols.reshape(h_out * w_out, -1).T @ u_flat).reshape(kernel.shape)
    d_cols = (u_flat @ kernel.reshape(-1, cout).T).reshape(h_out, w_out, kh, kw, cin)
    dxp = np.zeros_like(xp)
    for a in range(kh):
        for b in range(kw):
            dxp[a: a + stride * h_out: stride,
                b: b + stride * w_out: stride] += d_cols[:, :, a, b, :]
    h, w = x.shape[0], x.shape[1]
    dx = dxp[padding: padding + h, padding: padding + w]
    return dx, d_kernel, d_bias


def bn_relu_fwd(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                mean: np.ndarray, var: np.ndarray, eps: float) -> np.ndarray:
    scale = gamma / np.sqrt(var + eps)
    return np.maximum(x * scale + (beta - mean * scale), 0)


def bn_relu_vjp(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                mean: np.ndarray, var: np.ndarray, eps: float, upstream: np.ndarray):
    inv_std = 1.0 / np.sqrt(var + eps)
    scale = gamma * inv_std
    lin = x * scale + (beta - mean * scale)
    du = upstream * (lin > 0)
    dx = du * scale
    xhat = (x - mean) * inv_std
    d_gamma = (du * xhat).sum(axis=(0, 1))
    d_beta = du.sum(axis=(0, 1))
    return dx, d_gamma, d_beta


def global_avg_pool_fwd(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(0, 1))


def global_avg_pool_vjp(x: np.ndarray, upstream: np.ndarray):
    h, w, _ = x.shape
    return (np.broadcast_to(upstream / (h * w), x.shape).astype(x.dtype, copy=True),)


def sigmoid_stable(z: np.ndarray) -> np.ndarray:
    """Overflow-free logistic: splits on sign so exp never sees +inf."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dense_fwd(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
              activation: str) -> np.ndarray:
    z = x @ weight + bias
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "sigmoid":
        return sigmoid_stable(z)
    return z


def dense_vjp(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
              activation: str, upstream: np.ndarray):
    z = x @ weight + bias
    if activation == "relu":
        dz = upstream * (z > 0)
    elif activation == "sigmoid":
        s = sigmoid_stable(z)
        dz = upstream * s * (1.0 - s)
    else:
        dz = upstream
    dx = dz @ weight.T
    d_weight = np.outer(x, dz)
    return dx, d_weight, dz.copy()


def upsample2_fwd(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=0).repeat(2, axis=1)


def upsample2_vjp(x: np.ndarray, upstream: np.ndarray):
    h, w, c = x.shape
    return (upstream.reshape(h, 2, w, 2, c).sum(axis=(1, 3)),)


def maxpool_fwd(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    h_out = conv_out_extent(x.shape[0], k, stride, padding)
    w_out = conv_out_extent(x.shape[1], k, stride, padding)
    hp, wp = x.shape[0] + 2 * padding, x.shape[1] + 2 * padding
    xp = np.full((hp, wp, x.shape[2]), -np.inf, dtype=x.dtype)
    xp[padding: padding + x.shape[0], padding: padding + x.shape[1]] = x
    win = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride]
    out = win.max(axis=(3, 4))
    assert out.shape[:2] == (h_out, w_out)
    return np.ascontiguousarray(out)


def maxpool_vjp(x: np.ndarray, k: int, stride: int, padding: int,
                upstream: np.ndarray):
    hp, wp = x.shape[0] + 2 * padding, x.shape[1] + 2 * padding
    c = x.shape[2]
    xp = np.full((hp, wp, c), -np.inf, dtype=x.dtype)
    xp[padding: padding + x.shape[0], padding: padding + x.shape[1]] = x
    win = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride]
    h_out, w_out = win.shape[0], win.shape[1]
    # first argmax in row-major (a, b) order resolves ties deterministically
    idx = win.reshape(h_out, w_out, c, k * k).argmax(axis=3)
    a, b = idx // k, idx % k
    rows = np.arange(h_out)[:, None, None] * stride + a
    cols = np.arange(w_out)[None, :, None] * stride + b
    chans = np.broadcast_to(np.arange(c), (h_out, w_out, c))
    dxp = np.zeros((hp, wp, c), dtype=x.dtype)
    np.add.at(dxp, (rows, cols, chans), upstream)
    return (dxp[padding: padding + x.shape[0], padding: padding + x.shape[1]].copy(),)


def concat_channels_fwd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([a, b], axis=-1)


def concat_channels_vjp(a: np.ndarray, b: np.ndarray, upstream: np.ndarray):
    ca = a.shape[-1]
    return upstream[..., :ca].copy(), upstream[..., ca:].copy()


def _is_channel_broadcast(a: np.ndarray, b: np.ndarray) -> bool:
    return a.ndim == 3 and b.ndim == 1 and b.shape[0] == a.shape[2]


def ewise_add_fwd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a + b


def ewise_add_vjp(a: np.ndarray, b: np.ndarray, upstream: np.ndarray):
    da = upstream.copy()
    db = upstream.sum(axis=(0, 1)) if _is_channel_broadcast(a, b) else upstream.copy()
    return da, db


def ewise_mul_fwd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a * b


def ewise_mul_vjp(a: np.ndarray, b: np.ndarray, upstream: np.ndarray):
    da = upstream * b
    if _is_channel_broadcast(a, b):
        db = (upstream * a).sum(axis=(0, 1))
    else:
        db = upstream * a
    return da, db


def softmax_fwd(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax_vjp(x: np.ndarray, upstream: np.ndarray):
    s = softmax_fwd(x)
    return (s * (upstream - np.dot(upstream, s)),)


# ---------------------------------------------------------------------------
# Tensor-level public ops
# ---------------------------------------------------------------------------

def _require_rank(t: Tensor, rank: int, what: str) -> None:
    if t.rank != rank:
        raise ShapeError(f"{what} must be rank {rank}, got rank {t.rank}")


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Cross-correlation with zero padding; bias added per output channel."""
    _require_rank(x, 3, "conv2d input")
    kh, kw, cin, cout = p.kernel.shape
    if x.shape[2] != cin:
        raise ShapeError(
            f"conv2d channel axis: input has {x.shape[2]} channels, kernel expects {cin}"
        )
    return Tensor._wrap(conv2d_fwd(x.data, p.kernel.data, p.bias.data, p.stride, p.padding))


def bn_relu(x: Tensor, p: BnParams) -> Tensor:
    """Per-channel affine normalize with running statistics, then ReLU."""
    _require_rank(x, 3, "bn_relu input")
    if x.shape[2] != p.gamma.shape[0]:
        raise ShapeError(
            f"bn_relu channel axis: input has {x.shape[2]} channels, params have {p.gamma.shape[0]}"
        )
    return Tensor._wrap(bn_relu_fwd(x.data, p.gamma.data, p.beta.data,
                                    p.running_mean.data, p.running_var.data, p.epsilon))


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: H x W x C -> C."""
    _require_rank(x, 3, "global_avg_pool input")
    return Tensor._wrap(global_avg_pool_fwd(x.data))


def dense(x: Tensor, p: DenseParams) -> Tensor:
    _require_rank(x, 1, "dense input")
    n = p.weight.shape[0]
    if x.shape[0] != n:
        raise ShapeError(f"dense input length {x.shape[0]} != weight rows {n}")
    return Tensor._wrap(dense_fwd(x.data, p.weight.data, p.bias.data, p.activation))


def upsample2_nearest(x: Tensor) -> Tensor:
    """Replicate each pixel into a 2x2 block: H x W x C -> 2H x 2W x C."""
    _require_rank(x, 3, "upsample2_nearest input")
    return Tensor._wrap(upsample2_fwd(x.data))


def maxpool(x: Tensor, k: int, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel window maximum; padding uses a -inf sentinel."""
    _require_rank(x, 3, "maxpool input")
    if k < 1:
        raise ValidationError(f"maxpool window must be >= 1, got {k}")
    return Tensor._wrap(maxpool_fwd(x.data, k, stride, padding))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_rank(a, 3, "concat_channels lhs")
    _require_rank(b, 3, "concat_channels rhs")
    if a.shape[:2] != b.shape[:2]:
        raise ShapeError(
            f"concat_channels spatial axes differ: {a.shape[:2]} vs {b.shape[:2]}"
        )
    return Tensor._wrap(concat_channels_fwd(a.data, b.data))


def _check_ewise_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if _is_channel_broadcast(a.data, b.data):
        return
    raise ShapeError(
        f"{op}: shapes {a.shape} and {b.shape} are neither equal nor a "
        f"rank-3 x channel-vector broadcast"
    )


def ewise_add(a: Tensor, b: Tensor) -> Tensor:
    _check_ewise_shapes(a, b, "ewise_add")
    return Tensor._wrap(ewise_add_fwd(a.data, b.data))


def ewise_mul(a: Tensor, b: Tensor) -> Tensor:
    _check_ewise_shapes(a, b, "ewise_mul")
    return Tensor._wrap(ewise_mul_fwd(a.data, b.data))


def softmax(x: Tensor) -> Tensor:
    _require_rank(x, 1, "softmax input")
    return Tensor._wrap(softmax_fwd(x.data))


# ---------------------------------------------------------------------------
# Reverse-mode dispatch: op id -> cotangents for inputs and params
# ---------------------------------------------------------------------------

def _vjp_conv2d(inputs: dict, upstream: np.ndarray) -> dict:
    dx, dk, db = conv2d_vjp(inputs["input"], inputs["kernel"], inputs["bias"],
                            inputs.get("stride", 1), inputs.get("padding", 0), upstream)
    return {"input": dx, "kernel": dk, "bias": db}


def _vjp_bn_relu(inputs: dict, upstream: np.ndarray) -> dict:
    dx, dg, db = bn_relu_vjp(inputs["input"], inputs["gamma"], inputs["beta"],
                             inputs["running_mean"], inputs["running_var"],
                             inputs.get("epsilon", 1e-5), upstream)
    return {"input": dx, "gamma": dg, "beta": db}


def _vjp_dense(inputs: dict, upstream: np.ndarray) -> dict:
    dx, dw, db = dense_vjp(inputs["input"], inputs["weight"], inputs["bias"],
                           inputs.get("activation", "none"), upstream)
    return {"input": dx, "weight": dw, "bias": db}


def _vjp_gap(inputs: dict, upstream: np.ndarray) -> dict:
    (dx,) = global_avg_pool_vjp(inputs["input"], upstream)
    return {"input": dx}


def _vjp_up2(inputs: dict, upstream: np.ndarray) -> dict:
    (dx,) = upsample2_vjp(inputs["input"], upstream)
    return {"input": dx}


def _vjp_maxpool(inputs: dict, upstream: np.ndarray) -> dict:
    (dx,) = maxpool_vjp(inputs["input"], inputs["k"],
                        inputs.get("stride", 1), inputs.get("padding", 0), upstream)
    return {"input": dx}


def _vjp_concat(inputs: dict, upstream: np.ndarray) -> dict:
    da, db = concat_channels_vjp(inputs["a"], inputs["b"], upstream)
    return {"a": da, "b": db}


def _vjp_add(inputs: dict, upstream: np.ndarray) -> dict:
    da, db = ewise_add_vjp(inputs["a"], inputs["b"], upstream)
    return {"a": da, "b": db}


def _vjp_mul(inputs: dict, upstream: np.ndarray) -> dict:
    da, db = ewise_mul_vjp(inputs["a"], inputs["b"], upstream)
    return {"a": da, "b": db}


def _vjp_softmax(inputs: dict, upstream: np.ndarray) -> dict:
    (dx,) = softmax_vjp(inputs["input"], upstream)
    return {"input": dx}


VJP_OPS = {
    "conv2d": _vjp_conv2d,
    "bn_relu": _vjp_bn_relu,
    "dense": _vjp_dense,
    "global_avg_pool": _vjp_gap,
    "ewise_add": _vjp_add,
    "ewise_mul": _vjp_mul,
    "concat_channels": _vjp_concat,
    "upsample2_nearest": _vjp_up2,
    "maxpool": _vjp_maxpool,
    "softmax": _vjp_softmax,
}


def vjp(op_id: str, inputs: dict, upstream: np.ndarray) -> dict:
    """Exact reverse-mode vector-Jacobian product of a forward op.

    ``inputs`` holds the op's data inputs and parameters as plain arrays
    (plus scalar attributes like stride); returns cotangents keyed the same
    way. Ops without a defined VJP are rejected.
    """
    fn = VJP_OPS.get(op_id)
    if fn is None:
        raise ValidationError(f"no VJP defined for op {op_id!r}")
    return fn(inputs, np.asarray(upstream))

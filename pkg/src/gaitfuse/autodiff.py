"""Reverse-mode graph on top of the array kernels.

Var wraps an ndarray and remembers how to push a cotangent to its parents.
The graph is built eagerly by the primitive functions below; ``backward``
walks it once in reverse topological order. Kernels are dtype-preserving, so
running a graph on float64 leaves gives the checking mode used by
``check_gradients``.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import ValidationError

__all__ = [
    "Var",
    "leaf",
    "backward",
    "check_gradients",
    "GradCheckResult",
]


class Var:
    __slots__ = ("a", "grad", "parents", "vjp_fn", "requires")

    def __init__(self, a: np.ndarray, parents: tuple = (), vjp_fn=None, requires: bool = False):
        self.a = a
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.vjp_fn = vjp_fn
        self.requires = requires

    @property
    def shape(self) -> tuple[int, ...]:
        return self.a.shape


def leaf(a: np.ndarray, requires: bool = False) -> Var:
    return Var(np.asarray(a), requires=requires)


def _node(out: np.ndarray, parents: Sequence[Var], vjp_fn: Callable) -> Var:
    if any(p.requires for p in parents):
        return Var(out, tuple(parents), vjp_fn, requires=True)
    return Var(out)


# Activation-pattern tracking: when a sink is installed, kinked primitives
# (relu, maxpool, channel max) append their active set / argmax pattern.
# Gradient checks exclude coordinates whose perturbation changes any pattern,
# i.e. points adjacent to a kink where finite differences are invalid.
_pattern_sink: list | None = None


def track_patterns(sink: list | None) -> None:
    global _pattern_sink
    _pattern_sink = sink


def _record_pattern(arr: np.ndarray) -> None:
    if _pattern_sink is not None:
        _pattern_sink.append(arr)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def conv2d(x: Var, kernel: Var, bias: Var, stride: int = 1, padding: int = 0) -> Var:
    out = ops.conv2d_fwd(x.a, kernel.a, bias.a, stride, padding)

    def vjp_fn(u):
        return ops.conv2d_vjp(x.a, kernel.a, bias.a, stride, padding, u)

    return _node(out, (x, kernel, bias), vjp_fn)


def bn_relu(x: Var, gamma: Var, beta: Var, mean: np.ndarray, var: np.ndarray,
            eps: float) -> Var:
    out = ops.bn_relu_fwd(x.a, gamma.a, beta.a, mean, var, eps)
    if _pattern_sink is not None:
        _record_pattern(out > 0)

    def vjp_fn(u):
        return ops.bn_relu_vjp(x.a, gamma.a, beta.a, mean, var, eps, u)

    return _node(out, (x, gamma, beta), vjp_fn)


def global_avg_pool(x: Var) -> Var:
    out = ops.global_avg_pool_fwd(x.a)

    def vjp_fn(u):
        return ops.global_avg_pool_vjp(x.a, u)

    return _node(out, (x,), vjp_fn)


def dense(x: Var, weight: Var, bias: Var, activation: str = "none") -> Var:
    out = ops.dense_fwd(x.a, weight.a, bias.a, activation)
    if _pattern_sink is not None and activation == "relu":
        _record_pattern(out > 0)

    def vjp_fn(u):
        return ops.dense_vjp(x.a, weight.a, bias.a, activation, u)

    return _node(out, (x, weight, bias), vjp_fn)


def upsample2_nearest(x: Var) -> Var:
    out = ops.upsample2_fwd(x.a)

    def vjp_fn(u):
        return ops.upsample2_vjp(x.a, u)

    return _node(out, (x,), vjp_fn)


def maxpool(x: Var, k: int, stride: int = 1, padding: int = 0) -> Var:
    out = ops.maxpool_fwd(x.a, k, stride, padding)
    if _pattern_sink is not None:
        from numpy.lib.stride_tricks import sliding_window_view
        hp, wp = x.a.shape[0] + 2 * padding, x.a.shape[1] + 2 * padding
        xp = np.full((hp, wp, x.a.shape[2]), -np.inf, dtype=x.a.dtype)
        xp[padding: padding + x.a.shape[0], padding: padding + x.a.shape[1]] = x.a
        win = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride]
        _record_pattern(win.reshape(*win.shape[:3], -1).argmax(axis=3))

    def vjp_fn(u):
        return ops.maxpool_vjp(x.a, k, stride, padding, u)

    return _node(out, (x,), vjp_fn)


def concat_channels(a: Var, b: Var) -> Var:
    out = ops.concat_channels_fwd(a.a, b.a)

    def vjp_fn(u):
        return ops.concat_channels_vjp(a.a, b.a, u)

    return _node(out, (a, b), vjp_fn)


def add(a: Var, b: Var) -> Var:
    out = ops.ewise_add_fwd(a.a, b.a)

    def vjp_fn(u):
        return ops.ewise_add_vjp(a.a, b.a, u)

    return _node(out, (a, b), vjp_fn)


def mul(a: Var, b: Var) -> Var:
    out = ops.ewise_mul_fwd(a.a, b.a)

    def vjp_fn(u):
        return ops.ewise_mul_vjp(a.a, b.a, u)

    return _node(out, (a, b), vjp_fn)


def softmax(x: Var) -> Var:
    out = ops.softmax_fwd(x.a)

    def vjp_fn(u):
        return ops.softmax_vjp(x.a, u)

    return _node(out, (x,), vjp_fn)


def channel_mean(x: Var) -> Var:
    """Per-position mean over channels: H x W x C -> H x W x 1."""
    out = x.a.mean(axis=2, keepdims=True)
    c = x.a.shape[2]

    def vjp_fn(u):
        return (np.broadcast_to(u / c, x.a.shape).copy(),)

    return _node(out, (x,), vjp_fn)


def channel_max(x: Var) -> Var:
    """Per-position max over channels: H x W x C -> H x W x 1."""
    out = x.a.max(axis=2, keepdims=True)
    idx = x.a.argmax(axis=2)
    if _pattern_sink is not None:
        _record_pattern(idx)

    def vjp_fn(u):
        dx = np.zeros_like(x.a)
        h, w = idx.shape
        rows = np.arange(h)[:, None]
        cols = np.arange(w)[None, :]
        dx[rows, cols, idx] = u[:, :, 0]
        return (dx,)

    return _node(out, (x,), vjp_fn)


def sigmoid(x: Var) -> Var:
    out = ops.sigmoid_stable(x.a)

    def vjp_fn(u):
        return (u * out * (1.0 - out),)

    return _node(out, (x,), vjp_fn)


def mul_map(x: Var, gate: Var) -> Var:
    """Multiply H x W x C features by an H x W x 1 gate, broadcast over channels."""
    out = x.a * gate.a

    def vjp_fn(u):
        return u * gate.a, (u * x.a).sum(axis=2, keepdims=True)

    return _node(out, (x, gate), vjp_fn)


def slice_channels(x: Var, start: int, stop: int) -> Var:
    out = x.a[:, :, start:stop].copy()

    def vjp_fn(u):
        dx = np.zeros_like(x.a)
        dx[:, :, start:stop] = u
        return (dx,)

    return _node(out, (x,), vjp_fn)


def concat_vec(a: Var, b: Var) -> Var:
    """Concatenate two rank-1 vectors."""
    out = np.concatenate([a.a, b.a])
    na = a.a.shape[0]

    def vjp_fn(u):
        return u[:na].copy(), u[na:].copy()

    return _node(out, (a, b), vjp_fn)


def scale(x: Var, c: float) -> Var:
    out = x.a * c

    def vjp_fn(u):
        return (u * c,)

    return _node(out, (x,), vjp_fn)


def sub(a: Var, b: Var) -> Var:
    return add(a, scale(b, -1.0))


def sum_squares(x: Var) -> Var:
    """Scalar sum of squared elements."""
    out = np.asarray((x.a * x.a).sum())

    def vjp_fn(u):
        return (2.0 * u * x.a,)

    return _node(out, (x,), vjp_fn)


def cross_entropy_logits(logits: Var, label: int) -> Var:
    """Scalar -log softmax(logits)[label], numerically stable."""
    z = logits.a
    zmax = z.max()
    lse = zmax + np.log(np.exp(z - zmax).sum())
    out = np.asarray(lse - z[label])

    def vjp_fn(u):
        probs = ops.softmax_fwd(z)
        g = probs.copy()
        g[label] -= 1.0
        return (u * g,)

    return _node(out, (logits,), vjp_fn)


def backward(root: Var, seed: np.ndarray | None = None) -> None:
    """Accumulate .grad on every requiring leaf reachable from root."""
    if not root.requires:
        raise ValidationError("backward on a graph with no differentiable leaves")
    if seed is None:
        if root.a.size != 1:
            raise ValidationError("backward needs an explicit seed for non-scalar roots")
        seed = np.ones_like(root.a)

    # iterative topological order
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    root.grad = np.asarray(seed, dtype=root.a.dtype)
    for node in reversed(order):
        if node.vjp_fn is None or node.grad is None:
            continue
        cotangents = node.vjp_fn(node.grad)
        for parent, ct in zip(node.parents, cotangents):
            if not parent.requires:
                continue
            if parent.grad is None:
                parent.grad = np.asarray(ct, dtype=parent.a.dtype).copy()
            else:
                parent.grad = parent.grad + ct


# ---------------------------------------------------------------------------
# Finite-difference gradient checking (float64 shadow path)
# ---------------------------------------------------------------------------

class GradCheckResult:
    def __init__(self):
        self.checked = 0
        self.skipped = 0
        self.max_rel_err = 0.0
        self.worst: tuple[str, int] | None = None

    def update(self, name: str, flat_idx: int, rel_err: float) -> None:
        self.checked += 1
        if rel_err > self.max_rel_err:
            self.max_rel_err = rel_err
            self.worst = (name, flat_idx)

    def __repr__(self):
        return (f"GradCheckResult(checked={self.checked}, skipped={self.skipped}, "
                f"max_rel_err={self.max_rel_err:.3e})")


def _rel_err(a: float, n: float) -> float:
    # float64 central differences carry ~1e-10 absolute evaluation noise, so
    # gradients below 1e-5 compare against that absolute scale instead; a
    # wrong VJP is off multiplicatively and still fails the 1e-4 criterion
    denom = max(abs(a), abs(n), 1e-5)
    return abs(a - n) / denom


def _patterns_equal(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(build, arrays: dict[str, np.ndarray], *,
                    points_per_array: int = 8, h: float = 1e-4,
                    rng: np.random.Generator | None = None) -> GradCheckResult:
    """Compare analytic gradients of a scalar-valued graph to central differences.

    ``build`` maps {name: Var} to a scalar Var. Everything runs in float64.
    Coordinates whose +/-h perturbation flips a relu/max activation pattern
    sit next to a kink where finite differences are meaningless; they are
    skipped and replacements drawn, up to a cap.
    """
    rng = rng or np.random.default_rng(0)
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    def run(arrs, requires: bool):
        sink: list = []
        track_patterns(sink)
        try:
            leaves = {k: leaf(v, requires=requires) for k, v in arrs.items()}
            out = build(leaves)
        finally:
            track_patterns(None)
        if out.a.size != 1:
            raise ValidationError("check_gradients expects a scalar-valued build")
        return out, leaves, sink

    out, leaves, base_pattern = run(arrays, True)
    backward(out)

    result = GradCheckResult()
    for name, base in arrays.items():
        g = leaves[name].grad
        if g is None:
            g = np.zeros_like(base)
        n_pts = min(points_per_array, base.size)
        candidates = rng.permutation(base.size)
        checked = 0
        for i in candidates:
            if checked >= n_pts:
                break
            plus = {k: (v.copy() if k == name else v) for k, v in arrays.items()}
            plus[name].flat[i] += h
            minus = {k: (v.copy() if k == name else v) for k, v in arrays.items()}
            minus[name].flat[i] -= h
            out_p, _, patt_p = run(plus, False)
            out_m, _, patt_m = run(minus, False)
            if not (_patterns_equal(base_pattern, patt_p)
                    and _patterns_equal(base_pattern, patt_m)):
                result.skipped += 1
                continue
            fd = (float(out_p.a) - float(out_m.a)) / (2 * h)
            result.update(name, int(i), _rel_err(float(g.flat[i]), fd))
            checked += 1
    return result

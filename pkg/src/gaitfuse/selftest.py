"""Built-in oracle and gradient self-checks, runnable from the CLI.

A compact version of the full test suite: every forward kernel against the
naive loop reference, every VJP against central finite differences, and the
shape contracts at both dimension presets.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import ops, reference
from .model import REDUCED_DIMS, STANDARD_DIMS, init_fusion_params, forward_features
from .tensor import Tensor

FORWARD_TOL = 1e-5
EXACT_TOL = 1e-6
GRAD_TOL = 1e-4


def _rand(rng, shape):
    return rng.normal(size=shape).astype(np.float32)


def check_forward_oracles(n_instances: int = 10, seed: int = 11) -> list[str]:
    rng = np.random.default_rng(seed)
    failures = []

    def cmp(name, got, want, tol):
        err = float(np.abs(np.asarray(got, np.float64) - want).max())
        if err > tol:
            failures.append(f"{name}: max abs err {err:.2e} > {tol}")

    for _ in range(n_instances):
        h, w, cin, cout = rng.integers(2, 8, size=4)
        k = int(rng.choice([1, 3]))
        pad = k // 2
        x = _rand(rng, (h, w, cin))
        kern = _rand(rng, (k, k, cin, cout))
        bias = _rand(rng, (cout,))
        cmp("conv2d", ops.conv2d_fwd(x, kern, bias, 1, pad),
            reference.conv2d(x, kern, bias, 1, pad), FORWARD_TOL)

        gamma, beta = _rand(rng, (cin,)), _rand(rng, (cin,))
        mean, var = _rand(rng, (cin,)), np.abs(_rand(rng, (cin,)))
        cmp("bn_relu", ops.bn_relu_fwd(x, gamma, beta, mean, var, 1e-5),
            reference.bn_relu(x, gamma, beta, mean, var, 1e-5), FORWARD_TOL)

        cmp("global_avg_pool", ops.global_avg_pool_fwd(x),
            reference.global_avg_pool(x), EXACT_TOL)

        n, m = int(rng.integers(2, 10)), int(rng.integers(2, 10))
        xv, wgt, b = _rand(rng, (n,)), _rand(rng, (n, m)), _rand(rng, (m,))
        act = str(rng.choice(["relu", "sigmoid", "none"]))
        cmp("dense", ops.dense_fwd(xv, wgt, b, act),
            reference.dense(xv, wgt, b, act), FORWARD_TOL)

        cmp("upsample2_nearest", ops.upsample2_fwd(x),
            reference.upsample2_nearest(x), EXACT_TOL)

        kp = int(rng.choice([2, 3, 5]))
        cmp("maxpool", ops.maxpool_fwd(x, kp, 1, kp // 2),
            reference.maxpool(x, kp, 1, kp // 2), EXACT_TOL)

        y = _rand(rng, (h, w, int(rng.integers(1, 5))))
        cmp("concat_channels", ops.concat_channels_fwd(x, y),
            reference.concat_channels(x, y), EXACT_TOL)

        cmp("softmax", ops.softmax_fwd(xv), reference.softmax(xv), EXACT_TOL)
    return failures


def _op_builders(rng):
    """(name, build, arrays) triples for per-op scalar gradient checks."""
    h, w, c = 4, 4, 3

    def weighted(out_var, u):
        return ad.sum_squares(ad.mul(out_var, ad.leaf(u)))

    u3 = rng.normal(size=(h, w, 2))
    conv_arrays = {"x": rng.normal(size=(h, w, c)), "k": rng.normal(size=(3, 3, c, 2)),
                   "b": rng.normal(size=2)}
    yield ("conv2d", lambda L: weighted(ad.conv2d(L["x"], L["k"], L["b"], 1, 1), u3),
           conv_arrays)

    mean, var = rng.normal(size=c), np.abs(rng.normal(size=c)) + 0.5
    ub = rng.normal(size=(h, w, c))
    yield ("bn_relu", lambda L: weighted(
        ad.bn_relu(L["x"], L["g"], L["be"], mean, var, 1e-5), ub),
        {"x": rng.normal(size=(h, w, c)), "g": rng.normal(size=c), "be": rng.normal(size=c)})

    ug = rng.normal(size=c)
    yield ("global_avg_pool", lambda L: weighted(ad.global_avg_pool(L["x"]), ug),
           {"x": rng.normal(size=(h, w, c))})

    ud = rng.normal(size=4)
    yield ("dense", lambda L: weighted(ad.dense(L["x"], L["w"], L["b"], "sigmoid"), ud),
           {"x": rng.normal(size=5), "w": rng.normal(size=(5, 4)), "b": rng.normal(size=4)})

    uu = rng.normal(size=(2 * h, 2 * w, c))
    yield ("upsample2_nearest", lambda L: weighted(ad.upsample2_nearest(L["x"]), uu),
           {"x": rng.normal(size=(h, w, c))})

    um = rng.normal(size=(h, w, c))
    yield ("maxpool", lambda L: weighted(ad.maxpool(L["x"], 3, 1, 1), um),
           {"x": rng.normal(size=(h, w, c))})

    uc = rng.normal(size=(h, w, c + 2))
    yield ("concat_channels", lambda L: weighted(ad.concat_channels(L["a"], L["b"]), uc),
           {"a": rng.normal(size=(h, w, c)), "b": rng.normal(size=(h, w, 2))})

    ua = rng.normal(size=(h, w, c))
    yield ("ewise_add", lambda L: weighted(ad.add(L["a"], L["b"]), ua),
           {"a": rng.normal(size=(h, w, c)), "b": rng.normal(size=(h, w, c))})
    yield ("ewise_mul_bcast", lambda L: weighted(ad.mul(L["a"], L["b"]), ua),
           {"a": rng.normal(size=(h, w, c)), "b": rng.normal(size=c)})

    us = rng.normal(size=6)
    yield ("softmax", lambda L: weighted(ad.softmax(L["x"]), us),
           {"x": rng.normal(size=6)})


def check_gradient_suite(points: int = 6, seed: int = 23) -> list[str]:
    rng = np.random.default_rng(seed)
    failures = []
    for name, build, arrays in _op_builders(rng):
        res = ad.check_gradients(build, arrays, points_per_array=points,
                                 rng=np.random.default_rng(seed + 1))
        if res.max_rel_err > GRAD_TOL:
            failures.append(f"{name}: rel err {res.max_rel_err:.2e} > {GRAD_TOL} "
                            f"at {res.worst}")
    return failures


def check_shape_contracts() -> list[str]:
    failures = []
    for dims, d_e in ((REDUCED_DIMS, 16), (STANDARD_DIMS, 256)):
        params = init_fusion_params(dims, d_e=d_e, seed=1)
        rng = np.random.default_rng(2)
        f4 = Tensor(rng.normal(size=dims.f4_shape).astype(np.float32))
        f5 = Tensor(rng.normal(size=dims.f5_shape).astype(np.float32))
        fine, coarse = forward_features(f4, f4, f5, f5, params)
        if fine.shape != dims.f4_shape or coarse.shape != dims.f5_shape:
            failures.append(
                f"dims {dims}: got {fine.shape} / {coarse.shape}, expected "
                f"{dims.f4_shape} / {dims.f5_shape}"
            )
    return failures


def run(verbose: bool = True) -> int:
    """Run all self-checks; returns 0 when everything passes."""
    suites = (
        ("forward oracles", check_forward_oracles),
        ("gradient suite", check_gradient_suite),
        ("shape contracts", check_shape_contracts),
    )
    all_ok = True
    for name, fn in suites:
        failures = fn()
        ok = not failures
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
            for f in failures:
                print(f"    {f}")
    return 0 if all_ok else 1

"""The fused forward pass, end to end.

Feeds a random RGB/depth feature-pyramid pair through the local and global
gates and the cross-spatial neck, then classifies. Uses the reduced preset;
flip STANDARD to True to see the full 40x40x512 / 20x20x1024 regime (slower).
"""
import numpy as np

from gaitfuse import REDUCED_DIMS, STANDARD_DIMS, Tensor, classify, \
    forward_features, init_fusion_params, mlge_global, mlge_local

STANDARD = False
dims = STANDARD_DIMS if STANDARD else REDUCED_DIMS

params = init_fusion_params(dims, d_e=32 if not STANDARD else 256, seed=0)
rng = np.random.default_rng(1)
t = lambda shape: Tensor(rng.normal(size=shape).astype(np.float32))
f4_rgb, f4_d = t(dims.f4_shape), t(dims.f4_shape)
f5_rgb, f5_d = t(dims.f5_shape), t(dims.f5_shape)

# the two gates, individually
local = mlge_local(f4_rgb, f4_d, params.mlge)
global_ = mlge_global(f5_rgb, f5_d, params.mlge)
print("local gate:", f4_rgb.shape, "x2 ->", local.shape)
print("global gate:", f5_rgb.shape, "x2 ->", global_.shape)

# the whole stack, with intermediates traced for inspection
trace = {}
fine, coarse = forward_features(f4_rgb, f4_d, f5_rgb, f5_d, params, trace=trace)
print("neck outputs:", fine.shape, "and", coarse.shape)
print("traced intermediates:", len(trace), "maps, e.g.",
      sorted(trace)[:3], "...")

pred = classify(fine, coarse, params.head)
print(f"prediction: {pred.class_label.display} "
      f"(confidence {pred.confidence:.2f}, probs "
      f"{[round(p, 3) for p in pred.probs]})")
print("embedding width:", pred.embedding.shape[0])

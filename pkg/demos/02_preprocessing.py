"""Disparity preprocessing and RGB-D alignment.

Shows the meters-to-disparity conversion, min-max normalization with its
degenerate guard, and the crop/resize alignment that keeps off-center
subjects off-center.
"""
import numpy as np

from gaitfuse import Box, RawFramePair, Tensor, align_pair, depth_to_disparity, \
    normalize_disparity

rng = np.random.default_rng(7)

# depth in meters; a subject about 2 m away against a 4 m background
depth = np.full((48, 48, 1), 4.0, dtype=np.float32)
depth[10:38, 8:20] = 2.0
disp = depth_to_disparity(Tensor(depth))
print("depth 2 m ->", disp.data[12, 10, 0], "(reciprocal)")
print("depth 4 m ->", disp.data[0, 0, 0])

norm = normalize_disparity(disp)
print("normalized range:", float(norm.data.min()), "..", float(norm.data.max()))

flat = normalize_disparity(Tensor(np.full((4, 4, 1), 0.25, np.float32)))
print("constant frame normalizes to all zeros:", not flat.data.any())

# alignment: both modalities crop to the same subject box, then resize
rgb = (rng.uniform(0, 255, size=(48, 48, 3))).astype(np.float32)
pair = RawFramePair(rgb=Tensor(rgb), depth_m=Tensor(depth),
                    subject_region=Box(x=4, y=8, w=24, h=32))
aligned = align_pair(pair, size=32)
print("aligned rgb:", aligned.rgb.shape, " disparity:", aligned.disparity.shape)
print("all values in [0,1]:",
      bool((aligned.rgb.data >= 0).all() and (aligned.rgb.data <= 1).all()
           and (aligned.disparity.data >= 0).all()
           and (aligned.disparity.data <= 1).all()))

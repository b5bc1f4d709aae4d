"""Tensor kernels and exact gradients.

Walks the dense-kernel layer: builds small tensors, runs the forward ops the
fusion stack is made of, and checks a composed gradient against central
finite differences in the float64 checking mode.
"""
import numpy as np

from gaitfuse import ConvParams, Tensor, conv2d, global_avg_pool, maxpool, softmax, tensor
from gaitfuse import autodiff as ad

rng = np.random.default_rng(0)

# a 4x4 single-channel image and a 3x3 edge-ish kernel
img = Tensor(rng.normal(size=(4, 4, 1)).astype(np.float32))
kern = ConvParams(kernel=tensor([1.0, 0.0, -1.0] * 3, shape=(3, 3, 1, 1)),
                  bias=tensor([0.0]), padding=1)
feat = conv2d(img, kern)
print("conv2d:", img.shape, "->", feat.shape)

pooled = global_avg_pool(feat)
print("global average pool:", feat.shape, "->", pooled.shape, "=", pooled.tolist())

print("maxpool 2x2/2:", maxpool(img, 2, 2, 0).shape)
print("softmax of pooled:", softmax(pooled).tolist())

# gradients: d/dx sum((conv(x) * u)^2) against finite differences
u = rng.normal(size=feat.shape)


def build(leaves):
    out = ad.conv2d(leaves["x"], leaves["k"], leaves["b"], 1, 1)
    return ad.sum_squares(ad.mul(out, ad.leaf(u)))


result = ad.check_gradients(
    build,
    {"x": img.data, "k": kern.kernel.data, "b": kern.bias.data},
    points_per_array=10,
)
print(f"gradient check: {result.checked} coordinates, "
      f"max relative error {result.max_rel_err:.2e}")

"""Neck fusion blocks: shape contracts, analytic gates, composed oracles."""
import numpy as np
import pytest

from gaitfuse import reference
from gaitfuse.neck import (
    C2psaParams,
    SpffParams,
    c2psa,
    c3k2,
    fuse_neck,
    init_neck_params,
    spff,
)
from gaitfuse.ops import ConvParams
from gaitfuse.tensor import ShapeError, Tensor, full, zeros


@pytest.fixture
def neck16():
    """Reduced-style channel counts: c4=16, c5=32."""
    return init_neck_params(16, 32, np.random.default_rng(5))


def rand(rng, shape):
    return Tensor(rng.normal(size=shape).astype(np.float32))


class TestSpff:
    def test_shape_preserved(self, rng, neck16):
        out = spff(rand(rng, (5, 5, 32)), neck16.spff)
        assert out.shape == (5, 5, 32)

    def test_constant_trace(self):
        c = 4
        pre = np.zeros((1, 1, c, c // 2), dtype=np.float32)
        for j in range(c // 2):
            pre[0, 0, 0, j] = 1.0  # every branch channel reads input channel 0
        post = np.full((1, 1, 2 * c, c), 1.0 / (2 * c), dtype=np.float32)
        p = SpffParams(pre=ConvParams(kernel=Tensor(pre), bias=zeros((c // 2,))),
                       post=ConvParams(kernel=Tensor(post), bias=zeros((c,))))
        out = spff(full((6, 6, c), 2.5), p)
        assert np.allclose(out.data, 2.5, atol=1e-6)

    def test_against_composed_oracle(self, rng, neck16):
        x = rand(rng, (6, 6, 32))
        out = spff(x, neck16.spff)
        p = neck16.spff
        a = reference.conv2d(x.data.astype(np.float64), p.pre.kernel.data,
                             p.pre.bias.data, 1, 0)
        m1 = reference.maxpool(a, 5, 1, 2)
        m2 = reference.maxpool(m1, 5, 1, 2)
        m3 = reference.maxpool(m2, 5, 1, 2)
        cat = np.concatenate([a, m1, m2, m3], axis=2)
        want = reference.conv2d(cat, p.post.kernel.data, p.post.bias.data, 1, 0)
        assert np.abs(out.data - want).max() <= 1e-3  # 2048-wide 1x1 reduction in f32


class TestC2psa:
    def test_zero_params_halve_exactly(self, rng):
        p = C2psaParams(spatial_conv=ConvParams(kernel=zeros((7, 7, 2, 1)),
                                                bias=zeros((1,)), padding=3))
        x = rand(rng, (5, 5, 4))
        out = c2psa(x, p)
        assert np.array_equal(out.data, x.data * np.float32(0.5))

    def test_shape_preserved(self, rng, neck16):
        out = c2psa(rand(rng, (5, 5, 32)), neck16.c2psa)
        assert out.shape == (5, 5, 32)

    def test_attention_bounds_output(self, rng, neck16):
        x = rand(rng, (5, 5, 32))
        out = c2psa(x, neck16.c2psa)
        assert (np.abs(out.data) <= np.abs(x.data) + 1e-7).all()

    def test_against_composed_oracle(self, rng, neck16):
        x = rand(rng, (5, 5, 4))
        p = C2psaParams(spatial_conv=ConvParams(
            kernel=rand(rng, (7, 7, 2, 1)), bias=rand(rng, (1,)), padding=3))
        out = c2psa(x, p)
        xd = x.data.astype(np.float64)
        stats = np.concatenate([xd.mean(axis=2, keepdims=True),
                                xd.max(axis=2, keepdims=True)], axis=2)
        conv = reference.conv2d(stats, p.spatial_conv.kernel.data,
                                p.spatial_conv.bias.data, 1, 3)
        att = 1.0 / (1.0 + np.exp(-conv))
        assert np.abs(out.data - xd * att).max() <= 1e-5


class TestC3k2:
    def test_standard_shape_contracts(self):
        neck = init_neck_params(16, 32, np.random.default_rng(1))
        assert c3k2(zeros((8, 8, 32)), neck.c3k2_40).shape == (8, 8, 16)
        assert c3k2(zeros((4, 4, 48)), neck.c3k2_20).shape == (4, 4, 32)

    def test_zero_input_zero_biases_zero_output(self, neck16):
        out = c3k2(zeros((4, 4, 32)), neck16.c3k2_40)
        assert not out.data.any()

    def test_against_composed_oracle(self, rng, neck16):
        x = rand(rng, (4, 4, 32))
        p = neck16.c3k2_40
        out = c3k2(x, p)
        xd = x.data.astype(np.float64)
        y = reference.conv2d(xd, p.split.kernel.data, p.split.bias.data, 1, 0)
        half = y.shape[2] // 2
        a, b = y[:, :, :half], y[:, :, half:]

        def stage(v, bp):
            conv = reference.conv2d(v, bp.conv.kernel.data, bp.conv.bias.data, 1, 1)
            return v + reference.bn_relu(conv, bp.bn.gamma.data, bp.bn.beta.data,
                                         bp.bn.running_mean.data,
                                         bp.bn.running_var.data, bp.bn.epsilon)

        chain = stage(stage(b, p.b1), p.b2)
        cat = np.concatenate([a, b, chain], axis=2)
        want = reference.conv2d(cat, p.merge.kernel.data, p.merge.bias.data, 1, 0)
        assert np.abs(out.data - want).max() <= 1e-4


class TestFuseNeck:
    def test_reduced_shape_contract(self, rng, neck16):
        f40, f20 = fuse_neck(rand(rng, (10, 10, 16)), rand(rng, (5, 5, 32)), neck16)
        assert f40.shape == (10, 10, 16)
        assert f20.shape == (5, 5, 32)

    def test_bad_spatial_ratio_rejected(self, rng, neck16):
        with pytest.raises(ShapeError, match="ratio"):
            fuse_neck(rand(rng, (10, 10, 16)), rand(rng, (4, 4, 32)), neck16)

    def test_against_composed_oracle(self, rng):
        neck = init_neck_params(4, 8, np.random.default_rng(2))
        f4, f5 = rand(rng, (4, 4, 4)), rand(rng, (2, 2, 8))
        f40, f20 = fuse_neck(f4, f5, neck)

        up = reference.upsample2_nearest(f5.data.astype(np.float64))
        reduced = reference.conv2d(up, neck.reduce.kernel.data, neck.reduce.bias.data, 1, 0)
        want40 = c3k2(Tensor(np.concatenate([reduced, f4.data], axis=2).astype(np.float32)),
                      neck.c3k2_40)
        assert np.abs(f40.data - want40.data).max() <= 1e-4

        pooled = spff(f5, neck.spff)
        attended = c2psa(pooled, neck.c2psa)
        down = reference.conv2d(f4.data.astype(np.float64), neck.down4.kernel.data,
                                neck.down4.bias.data, 2, 0)
        want20 = c3k2(Tensor(np.concatenate([attended.data, down], axis=2).astype(np.float32)),
                      neck.c3k2_20)
        assert np.abs(f20.data - want20.data).max() <= 1e-4

    def test_channel_permutation_equivariance(self):
        # integer-valued data and first-layer kernels make every summation
        # exact in float32, so re-indexing the coarse input channels together
        # with the matching kernel slices must reproduce bit-identical outputs
        import copy

        rng = np.random.default_rng(8)
        neck = init_neck_params(4, 8, rng)
        intify = lambda t: Tensor(rng.integers(-2, 3, size=t.shape).astype(np.float32))
        neck.reduce.kernel = intify(neck.reduce.kernel)
        neck.spff.pre.kernel = intify(neck.spff.pre.kernel)
        f4 = Tensor(rng.integers(-3, 4, size=(4, 4, 4)).astype(np.float32))
        f5 = Tensor(rng.integers(-3, 4, size=(2, 2, 8)).astype(np.float32))
        base40, base20 = fuse_neck(f4, f5, neck)

        perm = rng.permutation(8)
        permuted = copy.deepcopy(neck)
        permuted.reduce.kernel = Tensor(neck.reduce.kernel.data[:, :, perm, :])
        permuted.spff.pre.kernel = Tensor(neck.spff.pre.kernel.data[:, :, perm, :])
        got40, got20 = fuse_neck(f4, Tensor(f5.data[:, :, perm]), permuted)
        assert np.array_equal(base40.data, got40.data)
        assert np.array_equal(base20.data, got20.data)

"""Forward kernels against the naive loop reference, plus the pinned cases."""
import numpy as np
import pytest

from gaitfuse import ops, reference
from gaitfuse.ops import BnParams, ConvParams, DenseParams
from gaitfuse.tensor import ShapeError, Tensor, tensor, zeros

FORWARD_TOL = 1e-5
EXACT_TOL = 1e-6


def f32(a):
    return np.asarray(a, dtype=np.float32)


class TestConv2d:
    def test_scalar_product(self):
        p = ConvParams(kernel=tensor([3.0], shape=(1, 1, 1, 1)), bias=tensor([0.0]))
        out = ops.conv2d(tensor([2.0], shape=(1, 1, 1)), p)
        assert out.data.reshape(-1).tolist() == [6.0]

    def test_identity_kernel(self, rng):
        x = Tensor(rng.normal(size=(5, 5, 1)).astype(np.float32))
        p = ConvParams(kernel=tensor([1.0], shape=(1, 1, 1, 1)), bias=tensor([0.0]))
        assert np.array_equal(ops.conv2d(x, p).data, x.data)

    def test_against_loop_oracle(self, rng):
        x = rng.normal(size=(4, 4, 2)).astype(np.float32)
        k = rng.normal(size=(3, 3, 2, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        got = ops.conv2d_fwd(x, k, b, 1, 1)
        want = reference.conv2d(x, k, b, 1, 1)
        assert np.abs(got - want).max() <= FORWARD_TOL

    def test_channel_mismatch_names_axis(self):
        p = ConvParams(kernel=zeros((1, 1, 2, 1)), bias=zeros((1,)))
        with pytest.raises(ShapeError, match="channel axis"):
            ops.conv2d(zeros((3, 3, 3)), p)

    def test_non_integer_geometry_rejected(self):
        p = ConvParams(kernel=zeros((3, 3, 1, 1)), bias=zeros((1,)), stride=2, padding=1)
        with pytest.raises(ShapeError, match="extent 4"):
            ops.conv2d(zeros((4, 4, 1)), p)


class TestBnRelu:
    def test_identity_bn_relu_clamp(self):
        p = BnParams(gamma=tensor([1.0]), beta=tensor([0.0]),
                     running_mean=tensor([0.0]), running_var=tensor([1.0]),
                     epsilon=1e-12)
        out = ops.bn_relu(tensor([-1.0, 2.0], shape=(1, 2, 1)), p)
        assert out.data.reshape(-1).tolist() == [0.0, 2.0]

    def test_all_negative_to_zero(self, rng):
        x = Tensor(-np.abs(rng.normal(size=(3, 3, 2))).astype(np.float32) - 0.1)
        p = BnParams(gamma=tensor([1.0, 1.0]), beta=tensor([0.0, 0.0]),
                     running_mean=tensor([0.0, 0.0]), running_var=tensor([1.0, 1.0]),
                     epsilon=1e-12)
        assert np.array_equal(ops.bn_relu(x, p).data, np.zeros((3, 3, 2), np.float32))

    def test_against_formula_oracle(self, rng):
        x = rng.normal(size=(4, 5, 3)).astype(np.float32)
        gamma = rng.normal(size=3).astype(np.float32)
        beta = rng.normal(size=3).astype(np.float32)
        mean = rng.normal(size=3).astype(np.float32)
        var = np.abs(rng.normal(size=3)).astype(np.float32)
        got = ops.bn_relu_fwd(x, gamma, beta, mean, var, 1e-5)
        want = reference.bn_relu(x, gamma, beta, mean, var, 1e-5)
        assert np.abs(got - want).max() <= FORWARD_TOL

    def test_rejects_negative_variance(self):
        with pytest.raises(Exception, match="running_var"):
            BnParams(gamma=tensor([1.0]), beta=tensor([0.0]),
                     running_mean=tensor([0.0]), running_var=tensor([-1.0]))


class TestGlobalAvgPool:
    def test_all_ones(self):
        assert ops.global_avg_pool(Tensor(np.ones((4, 4, 3)))).data.tolist() == [1, 1, 1]

    def test_single_pixel_identity(self, rng):
        x = rng.normal(size=(1, 1, 6)).astype(np.float32)
        assert np.array_equal(ops.global_avg_pool(Tensor(x)).data, x.reshape(6))

    def test_against_mean_oracle(self, rng):
        x = rng.normal(size=(7, 5, 4)).astype(np.float32)
        got = ops.global_avg_pool_fwd(x)
        assert np.abs(got - reference.global_avg_pool(x)).max() <= EXACT_TOL


class TestDense:
    def test_sigmoid_of_zero(self):
        p = DenseParams(weight=zeros((4, 3)), bias=zeros((3,)), activation="sigmoid")
        out = ops.dense(tensor([1.0, 2.0, 3.0, 4.0]), p)
        assert out.data.tolist() == [0.5, 0.5, 0.5]

    def test_identity_weight(self, rng):
        x = rng.normal(size=4).astype(np.float32)
        p = DenseParams(weight=Tensor(np.eye(4, dtype=np.float32)),
                        bias=zeros((4,)), activation="none")
        assert np.array_equal(ops.dense(Tensor(x), p).data, x)

    def test_against_loop_oracle(self, rng):
        x = rng.normal(size=6).astype(np.float32)
        w = rng.normal(size=(6, 5)).astype(np.float32)
        b = rng.normal(size=5).astype(np.float32)
        for act in ("relu", "sigmoid", "none"):
            got = ops.dense_fwd(x, w, b, act)
            assert np.abs(got - reference.dense(x, w, b, act)).max() <= FORWARD_TOL

    def test_length_mismatch_rejected(self):
        p = DenseParams(weight=zeros((4, 3)), bias=zeros((3,)))
        with pytest.raises(ShapeError, match="length"):
            ops.dense(zeros((5,)), p)


class TestUpsample2:
    def test_single_pixel(self):
        out = ops.upsample2_nearest(tensor([7.0], shape=(1, 1, 1)))
        assert np.array_equal(out.data, np.full((2, 2, 1), 7.0, np.float32))

    def test_coarse_map_doubling(self):
        out = ops.upsample2_nearest(zeros((20, 20, 1024)))
        assert out.shape == (40, 40, 1024)

    def test_checkerboard_replication(self):
        x = tensor([0.0, 1.0, 1.0, 0.0], shape=(2, 2, 1))
        out = ops.upsample2_nearest(x).data[:, :, 0]
        want = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]])
        assert np.array_equal(out, want)


class TestMaxpool:
    def test_constant_field(self):
        x = Tensor(np.full((6, 6, 2), 3.5, np.float32))
        out = ops.maxpool(x, 5, 1, 2)
        assert np.array_equal(out.data, x.data)

    def test_monotone_windows(self):
        x = Tensor(np.arange(16, dtype=np.float32).reshape(4, 4, 1))
        out = ops.maxpool(x, 2, 2, 0)
        assert out.data.reshape(-1).tolist() == [5.0, 7.0, 13.0, 15.0]

    def test_against_loop_oracle(self, rng):
        x = rng.normal(size=(6, 6, 3)).astype(np.float32)
        for k, s, p in ((2, 2, 0), (3, 1, 1), (5, 1, 2)):
            got = ops.maxpool_fwd(x, k, s, p)
            assert np.abs(got - reference.maxpool(x, k, s, p)).max() <= EXACT_TOL


class TestConcatAndEwise:
    def test_concat_preserves_order(self, rng):
        a = rand = rng.normal(size=(2, 2, 1)).astype(np.float32)
        b = rng.normal(size=(2, 2, 1)).astype(np.float32)
        out = ops.concat_channels(Tensor(a), Tensor(b))
        assert out.shape == (2, 2, 2)
        assert np.array_equal(out.data[:, :, :1], a)
        assert np.array_equal(out.data[:, :, 1:], b)

    def test_concat_with_zeros(self, rng):
        a = rng.normal(size=(3, 3, 2)).astype(np.float32)
        out = ops.concat_channels(Tensor(a), zeros((3, 3, 2)))
        assert np.array_equal(out.data[:, :, 2:], np.zeros((3, 3, 2), np.float32))

    def test_concat_round_trip(self, rng):
        a = rng.normal(size=(2, 3, 2)).astype(np.float32)
        b = rng.normal(size=(2, 3, 4)).astype(np.float32)
        out = ops.concat_channels(Tensor(a), Tensor(b)).data
        assert np.array_equal(out[:, :, :2], a) and np.array_equal(out[:, :, 2:], b)

    def test_add_zero_identity(self, rng):
        x = Tensor(rng.normal(size=(3, 3, 2)).astype(np.float32))
        assert np.array_equal(ops.ewise_add(x, zeros((3, 3, 2))).data, x.data)

    def test_mul_ones_identity(self, rng):
        x = Tensor(rng.normal(size=(3, 3, 2)).astype(np.float32))
        ones = Tensor(np.ones((3, 3, 2), np.float32))
        assert np.array_equal(ops.ewise_mul(x, ones).data, x.data)

    def test_channel_broadcast_halves(self, rng):
        x = Tensor(rng.normal(size=(3, 3, 2)).astype(np.float32))
        out = ops.ewise_mul(x, tensor([0.5, 0.5]))
        assert np.allclose(out.data, x.data * 0.5)

    def test_incompatible_shapes_rejected(self):
        with pytest.raises(ShapeError):
            ops.ewise_add(zeros((2, 2, 2)), zeros((2, 3, 2)))


class TestSoftmax:
    def test_uniform(self):
        out = ops.softmax(zeros((3,)))
        assert np.allclose(out.data, [1 / 3] * 3)

    def test_against_oracle(self, rng):
        x = rng.normal(size=7).astype(np.float32)
        got = ops.softmax_fwd(x)
        assert np.abs(got - reference.softmax(x)).max() <= EXACT_TOL


class TestBulkProperties:
    """Seeded-random sweeps: oracle equivalence, shape algebra, determinism."""

    N_ORACLE = 30  # the acceptance suite runs the full 100-instance sweep

    def test_oracle_equivalence_sweep(self):
        rng = np.random.default_rng(42)
        for _ in range(self.N_ORACLE):
            h, w, cin, cout = (int(v) for v in rng.integers(1, 9, size=4))
            k = int(rng.choice([1, 3]))
            x = rng.normal(size=(h, w, cin)).astype(np.float32)
            kern = rng.normal(size=(k, k, cin, cout)).astype(np.float32)
            b = rng.normal(size=cout).astype(np.float32)
            got = ops.conv2d_fwd(x, kern, b, 1, k // 2)
            want = reference.conv2d(x, kern, b, 1, k // 2)
            assert np.abs(got - want).max() <= FORWARD_TOL

    def test_shape_algebra_sweep(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            h_out = int(rng.integers(1, 6))
            k = int(rng.integers(1, 5))
            s = int(rng.integers(1, 4))
            p = int(rng.integers(0, 3))
            h = (h_out - 1) * s + k - 2 * p
            if h < 1:
                continue
            cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            x = zeros((h, h, cin))
            conv = ConvParams(kernel=zeros((k, k, cin, cout)), bias=zeros((cout,)),
                              stride=s, padding=p)
            assert ops.conv2d(x, conv).shape == (h_out, h_out, cout)
            assert ops.maxpool(x, k, s, p).shape == (h_out, h_out, cin)

    def test_determinism(self, rng):
        x = rng.normal(size=(4, 4, 2)).astype(np.float32)
        k = rng.normal(size=(3, 3, 2, 2)).astype(np.float32)
        b = rng.normal(size=2).astype(np.float32)
        a1 = ops.conv2d_fwd(x, k, b, 1, 1)
        a2 = ops.conv2d_fwd(x.copy(), k.copy(), b.copy(), 1, 1)
        assert np.array_equal(a1, a2)

    def test_finiteness(self, rng):
        for _ in range(20):
            x = rng.normal(size=(5, 5, 3)).astype(np.float32) * 100
            k = rng.normal(size=(3, 3, 3, 4)).astype(np.float32)
            out = ops.conv2d_fwd(x, k, np.zeros(4, np.float32), 1, 1)
            assert np.isfinite(out).all()
            assert np.isfinite(ops.maxpool_fwd(x, 3, 1, 1)).all()
            assert np.isfinite(ops.softmax_fwd(x.reshape(-1)[:9])).all()

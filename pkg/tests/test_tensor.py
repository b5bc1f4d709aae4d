import numpy as np
import pytest

from gaitfuse.tensor import Tensor, ValidationError, read_gft, tensor, write_gft, zeros


class TestTensorInvariants:
    def test_rank_bounds(self):
        tensor([1.0])                    # rank 1 ok
        tensor(np.zeros((2, 2, 2, 2)))   # rank 4 ok
        with pytest.raises(ValidationError):
            tensor(np.float32(3.0))      # rank 0
        with pytest.raises(ValidationError):
            tensor(np.zeros((1, 1, 1, 1, 1)))

    def test_extents_positive(self):
        with pytest.raises(ValidationError):
            Tensor(np.zeros((0, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            tensor([1.0, np.nan])
        with pytest.raises(ValidationError):
            tensor([np.inf, 0.0])

    def test_buffer_is_frozen_and_caller_unaffected(self):
        src = np.ones(4, dtype=np.float32)
        t = Tensor(src)
        assert not t.data.flags.writeable
        assert src.flags.writeable  # constructing must not freeze the source
        src[0] = 5.0
        assert t.data[0] == 1.0     # tensor owns its copy

    def test_length_matches_shape(self):
        t = tensor(list(range(12)), shape=(3, 4))
        assert t.shape == (3, 4)
        assert t.size == 12


class TestGft:
    def test_round_trip(self, tmp_path, rng):
        arr = rng.normal(size=(3, 5, 2)).astype(np.float32)
        path = tmp_path / "t.gft"
        write_gft(path, Tensor(arr))
        back = read_gft(path)
        assert back.shape == (3, 5, 2)
        assert np.array_equal(back.data, arr)

    def test_byte_layout(self, tmp_path):
        t = zeros((2, 3))
        path = tmp_path / "t.gft"
        write_gft(path, t)
        raw = path.read_bytes()
        # magic + rank + 2 extents + 6 f32 values
        assert len(raw) == 4 + 4 + 2 * 4 + 6 * 4
        assert raw[:4] == b"GFT1"
        assert int.from_bytes(raw[4:8], "little") == 2
        assert int.from_bytes(raw[8:12], "little") == 2
        assert int.from_bytes(raw[12:16], "little") == 3

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.gft"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValidationError):
            read_gft(path)

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / "short.gft"
        write_gft(path, zeros((2, 2)))
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(ValidationError):
            read_gft(path)

    def test_rejects_trailing_bytes(self, tmp_path):
        path = tmp_path / "long.gft"
        write_gft(path, zeros((2, 2)))
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(ValidationError):
            read_gft(path)

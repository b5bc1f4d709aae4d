import numpy as np
import pytest

from gaitfuse.model import REDUCED_DIMS, init_fusion_params
from gaitfuse.params import flatten
from gaitfuse.synthetic import SynthConfig, gen_dataset
from gaitfuse.tensor import Tensor, ValidationError
from gaitfuse.train import TrainConfig, evaluate, train_head


@pytest.fixture(scope="module")
def small_data():
    return gen_dataset(SynthConfig(n_per_class=6, seed=5))


@pytest.fixture
def params():
    return init_fusion_params(REDUCED_DIMS, d_e=32, seed=0)


class TestTrainMechanics:
    def test_zero_lr_is_bit_identical(self, small_data, params):
        trained, _log = train_head(small_data, [], params,
                                   TrainConfig(epochs=2, lr=0.0, seed=0))
        before, after = flatten(params), flatten(trained)
        assert set(before) == set(after)
        for path in before:
            assert np.array_equal(before[path].data, after[path].data), path

    def test_single_sample_overfit(self, small_data, params):
        # the consistency term is constant in the parameters, so the probe
        # tracks the optimizable part with lambda_fr = 0
        cfg = TrainConfig(epochs=200, batch_size=1, lr=1e-3, lambda_fr=0.0,
                          patience=10 ** 9, cosine=False, seed=0)
        _trained, log = train_head([small_data[0]], [], params, cfg)
        losses = [r["loss"] for r in log if r["split"] == "train"]
        assert losses[-1] < 0.01

    def test_empty_dataset_rejected(self, params):
        with pytest.raises(ValidationError):
            train_head([], [], params, TrainConfig())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_aborts_with_last_good(self, params):
        # activations overflow float32 -> the first step aborts and the
        # initial parameters come back untouched
        d = REDUCED_DIMS
        huge = Tensor(np.full(d.f4_shape, 1e30, dtype=np.float32))
        huge5 = Tensor(np.full(d.f5_shape, 1e30, dtype=np.float32))
        bad = [(huge, huge, huge5, huge5, 0)]
        trained, log = train_head(bad, [], params,
                                  TrainConfig(epochs=3, lr=1e-3, seed=0))
        assert any("aborted" in rec for rec in log)
        before, after = flatten(params), flatten(trained)
        for path in before:
            assert np.array_equal(before[path].data, after[path].data), path

    def test_log_schema(self, small_data, params, tmp_path):
        log_file = tmp_path / "log.jsonl"
        _trained, log = train_head(small_data, small_data[:4], params,
                                   TrainConfig(epochs=2, lr=1e-4, seed=0),
                                   log_path=log_file)
        assert log_file.exists()
        import json
        lines = [json.loads(l) for l in log_file.read_text().splitlines()]
        assert len(lines) == len(log)
        for rec in lines:
            assert {"epoch", "split", "loss", "accuracy", "lr"} <= set(rec)
        assert {rec["split"] for rec in lines} == {"train", "val"}

    def test_bn_stats_move_under_training(self, small_data, params):
        trained, _ = train_head(small_data, [], params,
                                TrainConfig(epochs=1, lr=1e-4, seed=0))
        before = flatten(params)["mlge.local.bn1.running_mean"].data
        after = flatten(trained)["mlge.local.bn1.running_mean"].data
        assert not np.array_equal(before, after)

    def test_evaluate_matches_training_accuracy_shape(self, small_data, params):
        loss, acc = evaluate(small_data, params)
        assert loss > 0.0
        assert 0.0 <= acc <= 1.0

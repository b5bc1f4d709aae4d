import json

import pytest

from gaitfuse.config import ConfigError, load_config
from gaitfuse.model import REDUCED_DIMS, STANDARD_DIMS


class TestLoadConfig:
    def test_defaults_validate(self):
        cfg = load_config()
        assert cfg.dims == REDUCED_DIMS
        assert cfg.train.lr == pytest.approx(1e-4)
        assert cfg.train.weight_decay == pytest.approx(1e-5)
        assert cfg.train.batch_size == 16
        assert cfg.train.epochs == 30
        assert cfg.train.patience == 10

    def test_file_then_flag_override(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"dims": "standard", "seed": 3,
                                    "train": {"lr": 0.01}}))
        cfg = load_config(path, {"seed": 9})
        assert cfg.dims == STANDARD_DIMS
        assert cfg.seed == 9          # flag wins
        assert cfg.train.lr == 0.01   # file survives where no flag given

    def test_llm_url_override_creates_endpoint(self):
        cfg = load_config(None, {"llm_url": "http://localhost:8000/v1"})
        assert cfg.llm is not None
        assert cfg.llm.url == "http://localhost:8000/v1"

    def test_aggregated_violations_list_everything(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "dims": {"h4": 10, "w4": 10, "c4": 15, "h5": 6, "w5": 5, "c5": 30},
            "d_e": 0,
            "lambda_fr": -1,
        }))
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        msg = str(exc.value)
        # every independent violation is present in the single error
        assert "c4 must be even" in msg
        assert "twice the coarse" in msg
        assert "divisible by the gate reduction" in msg
        assert "d_e" in msg
        assert "lambda_fr" in msg

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError, match="preset"):
            load_config(None, {"dims": "huge"})

    def test_unknown_train_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"train": {"momentum": 0.9}}))
        with pytest.raises(ConfigError, match="unknown training option"):
            load_config(path)

    def test_custom_dims_mapping(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "dims": {"h4": 8, "w4": 8, "c4": 8, "h5": 4, "w5": 4, "c5": 16}}))
        cfg = load_config(path)
        assert cfg.dims.f4_shape == (8, 8, 8)
        assert cfg.dims_name == "custom"

"""A10 acceptance plus the full cross-component chain.

raw frames -> fusion-engine preprocess -> exporter (stub backbone) ->
fusion-engine infer/report at standard dims, all through the on-disk
interfaces. The fusion engine's own suite never touches this package.
"""
import json

import numpy as np
import pytest

from gaitfuse_exporter.export import export_features
from gaitfuse_exporter.gft import gft_byte_size, write_gft

gaitfuse = pytest.importorskip("gaitfuse")


def test_a10_exporter_acceptance(tmp_path):
    from gaitfuse.cli import main as fuse_main

    frames = tmp_path / "frames"
    rng = np.random.default_rng(9)
    for i in range(2):
        write_gft(frames / "rgb" / f"{i:06d}.gft",
                  rng.uniform(0, 1, size=(640, 640, 3)).astype(np.float32))
        write_gft(frames / "disparity" / f"{i:06d}.gft",
                  rng.uniform(0, 1, size=(640, 640, 1)).astype(np.float32))
    (frames / "meta.json").write_text(json.dumps(
        {"subject_id": "chain-subject", "symptoms": ["reduced_arm_swing"],
         "capture": {"lighting": "normal", "occlusion": "none"}, "frame_index": 0}))

    out1, out2 = tmp_path / "feat1", tmp_path / "feat2"
    m1 = export_features(frames, "stub:11", out1, deterministic=True)
    m2 = export_features(frames, "stub:11", out2, deterministic=True)

    # shapes load in the primary engine at the standard regime
    f4 = gaitfuse.read_gft(out1 / "f4_rgb" / "000000.gft")
    f5 = gaitfuse.read_gft(out1 / "f5_d" / "000000.gft")
    ok_shapes = f4.shape == (40, 40, 512) and f5.shape == (20, 20, 1024)

    # deterministic mode reproduces content hashes
    ok_hashes = m1.files == m2.files

    # format arithmetic
    ok_bytes = (out1 / "f4_rgb" / "000000.gft").stat().st_size \
        == gft_byte_size((40, 40, 512)) == 4 + 4 + 3 * 4 + 40 * 40 * 512 * 4

    # the primary pipeline consumes the export end-to-end
    preds = tmp_path / "preds.json"
    code_infer = fuse_main(["infer", "--data", str(out1), "--out", str(preds),
                            "--dims", "standard", "--seed", "1"])
    code_report = fuse_main(["report", "--predictions", str(preds),
                             "--meta", str(out1 / "meta.json"),
                             "--out-dir", str(tmp_path / "reports")])
    reports = sorted((tmp_path / "reports").glob("report_*.json"))
    ok_chain = code_infer == 0 and code_report == 0 and len(reports) == 2
    if ok_chain:
        doc = json.loads(reports[0].read_text())
        ok_chain = doc["report"]["source"] == "template" \
            and doc["metadata"]["subject_id"] == "chain-subject"

    ok = ok_shapes and ok_hashes and ok_bytes and ok_chain
    print(f"[{'PASS' if ok else 'FAIL'}] A10 exporter - shapes {ok_shapes}, "
          f"hashes {ok_hashes}, bytes {ok_bytes}, chain {ok_chain}", flush=True)
    assert ok

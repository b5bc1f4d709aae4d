"""Clinical reports and activation heatmaps.

Builds a prediction, assembles the LLM prompt, renders the deterministic
template report (what a frame gets when no endpoint is configured or the
endpoint fails), and exports an activation heatmap as PGM + CSV.

To route reports through a live chat-completions server instead:

    from gaitfuse import LlmEndpointConfig, report_for
    report = report_for(pred, meta, LlmEndpointConfig(url="http://localhost:8000/v1"))
"""
import tempfile
from pathlib import Path

import numpy as np

from gaitfuse import CaptureContext, GaitMetadata, Lighting, Occlusion, REDUCED_DIMS, \
    Symptom, Tensor, assemble_prompt, export_heatmap, forward_features, \
    init_fusion_params, predict, render_template_report

rng = np.random.default_rng(3)
dims = REDUCED_DIMS
params = init_fusion_params(dims, d_e=32, seed=0)
t = lambda shape: Tensor(rng.normal(size=shape).astype(np.float32))
f4_rgb, f4_d, f5_rgb, f5_d = t(dims.f4_shape), t(dims.f4_shape), \
    t(dims.f5_shape), t(dims.f5_shape)

pred = predict(f4_rgb, f4_d, f5_rgb, f5_d, params)
meta = GaitMetadata(
    subject_id="demo-subject",
    symptoms=frozenset({Symptom.REDUCED_ARM_SWING, Symptom.SHORT_STRIDE}),
    capture=CaptureContext(lighting=Lighting.LOW, occlusion=Occlusion.CLOTHING),
    frame_index=12,
)

prompt = assemble_prompt(pred, meta)
print("=== user prompt ===")
print(prompt.user)

report = render_template_report(pred, meta)
print("\n=== template report ===")
print(report.render_text())

trace = {}
forward_features(f4_rgb, f4_d, f5_rgb, f5_d, params, trace=trace)
out_dir = Path(tempfile.mkdtemp(prefix="gaitfuse_maps_"))
pgm, csv = export_heatmap(trace["mlge.local.out"], out_dir / "local_gate.pgm")
print(f"heatmap written: {pgm} ({pgm.stat().st_size} bytes) and {csv.name}")

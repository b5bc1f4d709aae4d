"""RGB-D gait fusion engine.

Dense tensor kernels with exact reverse-mode gradients, disparity
preprocessing, gated multiscale RGB-D feature fusion, a 3-class gait
classifier with desk-scale training, activation-heatmap export, and
LLM-backed clinical report generation with a deterministic fallback.
"""

from .tensor import Tensor, ShapeError, ValidationError, tensor, zeros, full, \
    read_gft, write_gft
from .ops import ConvParams, BnParams, DenseParams, conv2d, bn_relu, \
    global_avg_pool, dense, upsample2_nearest, maxpool, concat_channels, \
    ewise_add, ewise_mul, softmax, vjp
from .preprocess import RawFramePair, AlignedFramePair, Box, Scope, \
    DepthRangeError, depth_to_disparity, normalize_disparity, normalize_rgb, \
    align_pair, align_sequence
from .mlge import MlgeParams, init_mlge_params, mlge, mlge_local, mlge_global
from .neck import NeckParams, C3k2Params, SpffParams, C2psaParams, \
    init_neck_params, spff, c2psa, c3k2, fuse_neck
from .head import GaitClass, HeadParams, Prediction, init_head_params, embed, \
    classify, fusion_loss
from .model import Dims, STANDARD_DIMS, REDUCED_DIMS, FusionParams, \
    init_fusion_params, forward_features, predict
from .train import TrainConfig, train_head, evaluate
from .synthetic import SynthConfig, gen_dataset, write_dataset, load_dataset, \
    split_dataset
from .viz import export_heatmap, read_pgm
from .report import Symptom, Lighting, Occlusion, CaptureContext, GaitMetadata, \
    PromptPair, ClinicalReport, LlmEndpointConfig, assemble_prompt, \
    render_template_report, generate_report, report_for
from .config import PipelineConfig, ConfigError, load_config
from .params import flatten, save_checkpoint, load_checkpoint

__version__ = "0.1.0"

"""Low-light 4D light field enhancement by deep compensation unfolding.

Physics-based low-light simulation, a multi-stage unfolded enhancement
network built from plane-convolution feature interaction blocks, toy-scale
training, and evaluation tooling for 4D light fields.
"""

from .errors import (
    DatasetError,
    DegenerateInputError,
    DivergenceError,
    ShapeError,
    ValueRangeError,
    WeightFormatError,
)
from .lightfield import (
    EpiSlice,
    LightField4D,
    PLANES,
    extract_epi,
    extract_sai,
    make_lightfield,
    matricize_center_sai,
    views_as_plane_batch,
)
from .simulate import NoiseParams, make_synthetic_scene, sample_alpha, simulate_lowlight
from .unfold import ModelConfig, StageState, UnfoldEnhancer, enhance, make_model
from .train import LossWeights, TrainConfig, composite_loss, grad_check, lr_schedule, sample_crops, ssim, train
from .metrics import MetricsRecord, evaluate_dataset, psnr, svd_spectrum

__version__ = "0.1.0"

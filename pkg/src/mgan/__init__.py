"""Multi-grained attention network (MGAN) for single-image super-resolution."""
from .autograd import Tensor
from .data import DegradationSpec
from .kernels import BACKEND
from .metrics import EvalReport, evaluate, psnr, self_ensemble_infer, ssim
from .model import MganModel, ModelConfig, ablation_config, build_model, forward, param_count
from .train import AdamState, TrainConfig, adam_step, l1_loss, lr_at_epoch, train

__version__ = "0.1.0"

from .metrics import bce_loss, miou
from .model import (
    ForwardConfig,
    SegmentationOutput,
    coarse_mask,
    forward_episode,
    refine_topdown,
)
from .training import SGDConfig, TrainResult, episode_loss, loss_and_grad_fn, train_toy
from .types import (
    Episode,
    PredictionMask,
    RefinerWeights,
    SegmenterParams,
    SupportItem,
    downsample_mask,
)

__all__ = [
    "Episode",
    "ForwardConfig",
    "PredictionMask",
    "RefinerWeights",
    "SGDConfig",
    "SegmentationOutput",
    "SegmenterParams",
    "SupportItem",
    "TrainResult",
    "bce_loss",
    "coarse_mask",
    "downsample_mask",
    "episode_loss",
    "forward_episode",
    "loss_and_grad_fn",
    "miou",
    "refine_topdown",
    "train_toy",
]

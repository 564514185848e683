"""SGD training of projector and refiner parameters on synthetic episodes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..exceptions import ContractError, TrainingError
from ..tensor import autodiff as ad
from ..tensor.autodiff import Tape
from ..tensor.gradcheck import ParameterVector
from .model import ForwardConfig, forward_nodes, select_supports
from .types import Episode, SegmenterParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SGDConfig:
    """Defaults follow the published recipe: lr 1e-4, momentum 0.9, weight decay 1e-4."""

    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    steps: int = 200


@dataclass
class TrainResult:
    params: SegmenterParams
    loss_trace: list = field(default_factory=list)


def episode_loss(episode: Episode, params: SegmenterParams, config: ForwardConfig,
                 with_grad: bool = True):
    """Loss of one episode and, optionally, gradients matching ``params.arrays()``."""
    kept, _ = select_supports(episode, params, config.prune)
    tape = Tape()
    arrays = params.arrays()
    leaves = [tape.variable(a) for a in arrays]
    probs, _ = forward_nodes(tape, episode, params.with_arrays(leaves), config, kept)
    loss = ad.bce(probs, episode.query_truth[:, :, None])
    if not with_grad:
        return float(loss.value), None
    grads = ad.backward(tape, loss)
    return float(loss.value), [grads[leaf] for leaf in leaves]


def loss_and_grad_fn(episode: Episode, params: SegmenterParams, config: Optional[ForwardConfig] = None):
    """Flat-vector views of :func:`episode_loss` for finite-difference checks.

    The kept support set is fixed at ``params`` so that pruning stays out of
    the differentiated function.
    """
    config = ForwardConfig() if config is None else config
    kept, _ = select_supports(episode, params, config.prune)
    flat = ParameterVector(params.arrays())

    def run(vec, with_grad):
        p = params.with_arrays(flat.unflatten(vec))
        tape = Tape()
        leaves = [tape.variable(a) for a in p.arrays()]
        probs, _ = forward_nodes(tape, episode, p.with_arrays(leaves), config, kept)
        loss = ad.bce(probs, episode.query_truth[:, :, None])
        if not with_grad:
            return float(loss.value)
        grads = ad.backward(tape, loss)
        return flat.flatten([grads[leaf] for leaf in leaves])

    return (lambda v: run(v, False)), (lambda v: run(v, True)), flat.flatten(params.arrays())


def train_toy(dataset: Sequence[Episode], params: SegmenterParams, hyper: SGDConfig = SGDConfig(),
              config: Optional[ForwardConfig] = None) -> TrainResult:
    """Momentum SGD with L2 weight decay, one episode per step, cycling the dataset."""
    if len(dataset) == 0:
        raise ContractError("training needs at least one episode")
    config = ForwardConfig() if config is None else config
    params = params.copy()
    arrays = params.arrays()
    velocity = [np.zeros_like(a) for a in arrays]
    trace = []
    for step in range(hyper.steps):
        episode = dataset[step % len(dataset)]
        loss, grads = episode_loss(episode, params.with_arrays(arrays), config)
        if not np.isfinite(loss):
            raise TrainingError(step, loss)
        trace.append(loss)
        for a, v, g in zip(arrays, velocity, grads):
            v *= hyper.momentum
            v += g + hyper.weight_decay * a
            a -= hyper.learning_rate * v
        if step % 50 == 0:
            logger.debug("step %d loss %.6f", step, loss)
    return TrainResult(params.with_arrays(arrays), trace)

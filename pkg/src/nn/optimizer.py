"""Mini-batch SGD with momentum and a step-decay learning-rate schedule."""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from src.errors import ParameterError, ShapeMismatchError
from src.nn.layers import Tensor
from src.nn.network import Network

logger = logging.getLogger(__name__)

DEFAULT_MOMENTUM = 0.95
DEFAULT_BASE_LR = 1e-5
DEFAULT_DECAY_FACTOR = 0.1
DEFAULT_DECAY_EVERY = 10
DEFAULT_NEW_LAYER_LR_MULTIPLIER = 50.0


@dataclass(frozen=True)
class OptimizerConfig:
    """SGD hyperparameters.

    Attributes:
        momentum: Velocity decay beta.
        base_lr: Learning rate at epoch 0.
        decay_factor: Multiplier applied every decay_every epochs.
        decay_every: Epochs between decays.
        new_layer_lr_multiplier: Extra lr factor for layers flagged new_layer.
        weight_decay: L2 penalty added to the gradient.
    """

    momentum: float = DEFAULT_MOMENTUM
    base_lr: float = DEFAULT_BASE_LR
    decay_factor: float = DEFAULT_DECAY_FACTOR
    decay_every: int = DEFAULT_DECAY_EVERY
    new_layer_lr_multiplier: float = DEFAULT_NEW_LAYER_LR_MULTIPLIER
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.momentum < 1:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.base_lr < 0:
            raise ParameterError(f"base_lr must be >= 0, got {self.base_lr}")
        if not 0 < self.decay_factor <= 1:
            raise ParameterError(
                f"decay_factor must be in (0, 1], got {self.decay_factor}"
            )
        if self.decay_every < 1:
            raise ParameterError(f"decay_every must be >= 1, got {self.decay_every}")
        if self.new_layer_lr_multiplier <= 0:
            raise ParameterError(
                "new_layer_lr_multiplier must be > 0, "
                f"got {self.new_layer_lr_multiplier}"
            )
        if self.weight_decay < 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerConfig":
        return cls(**data)


def learning_rate(
    config: OptimizerConfig, epoch: int, new_layer: bool = False
) -> float:
    """Step-decayed learning rate for an epoch.

    base_lr * decay_factor^floor(epoch / decay_every), times
    new_layer_lr_multiplier for new layers.
    """
    if epoch < 0:
        raise ParameterError(f"epoch must be >= 0, got {epoch}")
    lr = config.base_lr * config.decay_factor ** (epoch // config.decay_every)
    if new_layer:
        lr *= config.new_layer_lr_multiplier
    return lr


def sgd_step(
    params: Tensor,
    grads: Tensor,
    velocity: Tensor,
    config: OptimizerConfig,
    epoch: int,
    new_layer: bool = False,
) -> None:
    """One momentum update, in place.

    v <- momentum * v - lr * (grad + weight_decay * w);  w <- w + v
    """
    if not (params.shape == grads.shape == velocity.shape):
        raise ShapeMismatchError("sgd_step operands", params.shape, grads.shape)
    lr = learning_rate(config, epoch, new_layer)
    step = grads + config.weight_decay * params if config.weight_decay else grads
    velocity *= config.momentum
    velocity -= lr * step
    params += velocity


class SGDMomentum:
    """Momentum SGD over all parameters of a network.

    Attributes:
        network: The network being optimized.
        config: Hyperparameters.
        velocity: Per-parameter velocity keyed by qualified name.
    """

    def __init__(self, network: Network, config: OptimizerConfig) -> None:
        self.network = network
        self.config = config
        self.velocity: dict[str, Tensor] = {
            name: np.zeros_like(layer.params[key])
            for name, layer, key in network.parameters()
        }

    def step(self, epoch: int) -> None:
        """Apply the accumulated gradients."""
        for name, layer, key in self.network.parameters():
            sgd_step(
                layer.params[key],
                layer.grads[key],
                self.velocity[name],
                self.config,
                epoch,
                layer.new_layer,
            )

    def load_velocity(self, velocity: dict[str, Tensor]) -> None:
        """Restore velocity from a checkpoint.

        Raises:
            ShapeMismatchError: If a tensor does not match its parameter.
        """
        for name, current in self.velocity.items():
            restored = np.asarray(velocity[name], dtype=np.float64)
            if restored.shape != current.shape:
                raise ShapeMismatchError(
                    f"velocity {name}", current.shape, restored.shape
                )
            self.velocity[name] = restored.copy()

"""Mini-batch training of the correction regressor.

Each epoch visits the training samples in an order drawn from a generator
seeded with (config.seed, epoch), so two networks trained with the same config
on the same manifest see bit-identical batch sequences, and a resumed run
continues exactly where the interrupted one stopped.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from tqdm import tqdm

from src.augment.synthesis import DatasetManifest, Sample, Split
from src.errors import CheckpointError, ConfigError, TrainingError
from src.imaging.volume import NormalizationStats
from src.models import NetworkSpec, build_layers
from src.nn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.nn.layers import Tensor
from src.nn.loss import mse_loss
from src.nn.network import Network
from src.nn.optimizer import OptimizerConfig, SGDMomentum
from src.training.predictor import TrainedModel, network_input, stack_volumes

logger = logging.getLogger(__name__)

FULL_SCALE_EPOCHS = 500
DEFAULT_EPOCHS = 30
DEFAULT_BATCH_SIZE = 16


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    Attributes:
        epochs: Total epochs (a resumed run trains up to this count).
        batch_size: Mini-batch size; the last batch of an epoch may be smaller.
        optimizer: SGD settings and lr schedule.
        seed: Seed of the per-epoch shuffles.
        checkpoint_every: Save every n epochs (0: only after the last epoch).
    """

    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 0:
            raise ConfigError(
                f"checkpoint_every must be >= 0, got {self.checkpoint_every}"
            )

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer.to_dict(),
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(
            epochs=int(data.get("epochs", DEFAULT_EPOCHS)),
            batch_size=int(data.get("batch_size", DEFAULT_BATCH_SIZE)),
            optimizer=OptimizerConfig.from_dict(data.get("optimizer", {})),
            seed=int(data.get("seed", 0)),
            checkpoint_every=int(data.get("checkpoint_every", 0)),
        )


@dataclass
class TrainingSet:
    """Assembled network inputs and regression targets.

    Attributes:
        inputs: (n, channels, size, size).
        targets: (n, 4) ground-truth corrections.
        sample_ids: Sample id of each row.
    """

    inputs: Tensor
    targets: Tensor
    sample_ids: list[str]

    def __len__(self) -> int:
        return len(self.sample_ids)


@dataclass
class TrainResult:
    network: Network
    history: list[float]
    epochs_completed: int


def build_training_set(
    network: Network, manifest: DatasetManifest, samples: Sequence[Sample]
) -> TrainingSet:
    """Assemble the training-split samples into network inputs and targets.

    Raises:
        TrainingError: If no training samples are given.
    """
    train_samples = [s for s in samples if s.record.split is Split.TRAIN]
    if not train_samples:
        raise TrainingError("no training samples")
    volumes = [
        network_input(
            network, s.image, s.mask, manifest.normalization, manifest.class_count
        )
        for s in train_samples
    ]
    return TrainingSet(
        inputs=stack_volumes(network, volumes),
        targets=np.stack([s.record.truth.as_array() for s in train_samples]),
        sample_ids=[s.record.sample_id for s in train_samples],
    )


def epoch_order(seed: int, epoch: int, count: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(count)


def _run_epoch(
    network: Network,
    optimizer: SGDMomentum,
    data: TrainingSet,
    config: TrainConfig,
    epoch: int,
) -> float:
    order = epoch_order(config.seed, epoch, len(data))
    total = 0.0
    for start in range(0, len(data), config.batch_size):
        batch = order[start : start + config.batch_size]
        network.zero_grad()
        loss, grad = mse_loss(network.forward(data.inputs[batch]), data.targets[batch])
        if not math.isfinite(loss):
            raise TrainingError(
                f"non-finite loss {loss} at epoch {epoch}, batch starting at {start}"
            )
        network.backward(grad)
        optimizer.step(epoch)
        total += loss * len(batch)
        logger.debug(f"epoch {epoch} batch {start // config.batch_size}: {loss:.6f}")
    return total / len(data)


def train(
    network: Network,
    data: TrainingSet,
    config: TrainConfig,
    checkpoint_path: Path | str | None = None,
    checkpoint_meta: dict[str, Any] | None = None,
    resume: Checkpoint | None = None,
    show_progress: bool = False,
) -> TrainResult:
    """Train a network with momentum SGD on an MSE loss.

    Args:
        network: Initialized network; trained in place.
        data: Assembled training set.
        config: Hyperparameters.
        checkpoint_path: Where checkpoints are written (none when None).
        checkpoint_meta: Extra metadata stored with each checkpoint.
        resume: Checkpoint to continue from (weights, velocity, epoch, history).
        show_progress: Show a progress bar over epochs.

    Returns:
        The network, the per-epoch loss history and the epoch count reached.

    Raises:
        TrainingError: If the loss becomes non-finite.
        CheckpointError: If the resume checkpoint does not match the network.
    """
    optimizer = SGDMomentum(network, config.optimizer)
    history: list[float] = []
    start_epoch = 0
    if resume is not None:
        network.load_state_dict(resume.params)
        if resume.velocity:
            try:
                optimizer.load_velocity(resume.velocity)
            except (KeyError, ValueError) as e:
                raise CheckpointError(
                    f"velocity does not match the network: {e}"
                ) from e
        start_epoch = resume.epoch
        history = [float(v) for v in resume.meta.get("history", [])]
        logger.info(f"Resuming training at epoch {start_epoch}")

    def checkpoint(epoch: int) -> None:
        if checkpoint_path is None:
            return
        meta = {
            **(checkpoint_meta or {}),
            "train": config.to_dict(),
            "history": history,
        }
        save_checkpoint(
            Checkpoint(
                params=network.state_dict(),
                velocity={k: v.copy() for k, v in optimizer.velocity.items()},
                epoch=epoch,
                meta=meta,
            ),
            checkpoint_path,
        )

    logger.info(
        f"Training on {len(data)} samples for epochs {start_epoch}..{config.epochs - 1}"
    )
    for epoch in tqdm(
        range(start_epoch, config.epochs), desc="train", disable=not show_progress
    ):
        loss = _run_epoch(network, optimizer, data, config, epoch)
        history.append(loss)
        logger.info(f"Epoch {epoch}: loss {loss:.6f}")
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            checkpoint(epoch + 1)

    if config.epochs > start_epoch and not (
        config.checkpoint_every and config.epochs % config.checkpoint_every == 0
    ):
        checkpoint(config.epochs)
    return TrainResult(
        network=network,
        history=history,
        epochs_completed=max(config.epochs, start_epoch),
    )


def model_meta(spec: NetworkSpec, manifest: DatasetManifest) -> dict[str, Any]:
    """Checkpoint metadata that lets load_trained_model rebuild a model."""
    return {
        "network": spec.to_dict(),
        "normalization": manifest.normalization.to_dict(),
        "class_count": manifest.class_count,
    }


def trained_model_from_checkpoint(checkpoint: Checkpoint) -> TrainedModel:
    """Rebuild a model from checkpoint parameters and metadata.

    Raises:
        CheckpointError: If metadata is missing or does not match the parameters.
    """
    try:
        spec = NetworkSpec.from_dict(checkpoint.meta["network"])
        normalization = NormalizationStats.from_dict(checkpoint.meta["normalization"])
        class_count = int(checkpoint.meta["class_count"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint lacks model metadata: {e}") from e
    input_shape = (spec.input_channels, spec.input_size, spec.input_size)
    network = Network(build_layers(spec), input_shape)
    network.load_state_dict(checkpoint.params)
    return TrainedModel(
        network=network,
        spec=spec,
        normalization=normalization,
        class_count=class_count,
        history=[float(v) for v in checkpoint.meta.get("history", [])],
    )


def load_trained_model(path: Path | str) -> TrainedModel:
    return trained_model_from_checkpoint(load_checkpoint(path))

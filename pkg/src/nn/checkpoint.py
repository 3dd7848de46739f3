"""Checkpoint container: named parameter tensors, optimizer velocity, epoch and
JSON metadata, stored in one ``.npz`` file.

Metadata is a JSON string stored under ``__meta__`` so loading never needs
pickle.
"""

import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from src.errors import CheckpointError
from src.nn.layers import Tensor

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = "1.0"
META_KEY = "__meta__"
PARAM_PREFIX = "param/"
VELOCITY_PREFIX = "velocity/"


@dataclass
class Checkpoint:
    """Everything needed to rebuild a network and resume training.

    Attributes:
        params: Parameters by qualified name.
        velocity: Optimizer velocity by qualified name (may be empty).
        epoch: Number of completed epochs.
        meta: JSON-serializable metadata (network spec, train config, history).
    """

    params: dict[str, Tensor]
    velocity: dict[str, Tensor] = field(default_factory=dict)
    epoch: int = 0
    meta: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(checkpoint: Checkpoint, path: Path | str) -> Path:
    """Write a checkpoint.

    Raises:
        CheckpointError: If the file cannot be written.
    """
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "epoch": checkpoint.epoch,
        **checkpoint.meta,
    }
    arrays: dict[str, np.ndarray] = {
        META_KEY: np.array(json.dumps(meta, sort_keys=True))
    }
    arrays.update({PARAM_PREFIX + k: v for k, v in checkpoint.params.items()})
    arrays.update({VELOCITY_PREFIX + k: v for k, v in checkpoint.velocity.items()})
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} (epoch {checkpoint.epoch})")
    return path


def load_checkpoint(path: Path | str) -> Checkpoint:
    """Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: Unreadable or malformed file, or version mismatch.
    """
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            if META_KEY not in archive.files:
                raise CheckpointError(f"{path} has no checkpoint metadata")
            meta = json.loads(str(archive[META_KEY]))
            params = {
                k[len(PARAM_PREFIX) :]: archive[k].astype(np.float64)
                for k in archive.files
                if k.startswith(PARAM_PREFIX)
            }
            velocity = {
                k[len(VELOCITY_PREFIX) :]: archive[k].astype(np.float64)
                for k in archive.files
                if k.startswith(VELOCITY_PREFIX)
            }
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    version = meta.pop("version", None)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version!r} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    epoch = int(meta.pop("epoch", 0))
    return Checkpoint(params=params, velocity=velocity, epoch=epoch, meta=meta)

"""Network factory for the semantic white balance regressor.

This module provides the network variants (RGB-only and RGB + semantic mask),
their architecture specs and weight initialization.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from src.errors import ConfigError
from src.nn.layers import (
    Conv2D,
    Flatten,
    FullyConnected,
    Layer,
    MaxPool,
    ReLU,
    Softplus,
)
from src.nn.network import Network

logger = logging.getLogger(__name__)

OUTPUT_SIZE = 4
FIRST_HEAD_LAYER = 6
DEFAULT_INIT_STD = 0.01
# Mask-plane weight of every first-layer filter (LITERAL init)
MASK_SLICE_VALUE = 1.0 / 11.0
POSITIVITY_OFFSET = 1e-6


class NetworkVariant(Enum):
    """Ablation arms."""

    RGB = "rgb"
    SEMANTIC = "semantic"


# Input planes for each variant
VARIANT_CHANNELS = {
    NetworkVariant.RGB: 3,
    NetworkVariant.SEMANTIC: 4,
}


class InitScheme(str, Enum):
    GAUSSIAN = "gaussian"  # Gaussian(0, init_std)
    HE = "he"  # Gaussian(0, sqrt(2 / fan_in))


class MaskSliceInit(str, Enum):
    LITERAL = "literal"  # 1/11
    AVERAGE = "average"  # 1/(kernel * kernel)


@dataclass(frozen=True)
class ConvBlock:
    """Conv + ReLU, optionally followed by max pooling.

    Attributes:
        out_channels: Filters.
        kernel: Square kernel side.
        stride: Conv stride.
        pad: Zero padding.
        pool_kernel: Pool window (0 for no pooling).
        pool_stride: Pool stride.
    """

    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0
    pool_kernel: int = 2
    pool_stride: int = 2


DESK_CONV_STACK = (
    ConvBlock(16, kernel=5, pad=2),
    ConvBlock(32, kernel=3, pad=1),
    ConvBlock(64, kernel=3, pad=1),
)
DESK_HEAD = (128, 64, 32)

FULL_CONV_STACK = (
    ConvBlock(96, kernel=11, stride=4, pool_kernel=3, pool_stride=2),
    ConvBlock(256, kernel=5, pad=2, pool_kernel=3, pool_stride=2),
    ConvBlock(384, kernel=3, pad=1, pool_kernel=0),
    ConvBlock(384, kernel=3, pad=1, pool_kernel=0),
    ConvBlock(256, kernel=3, pad=1, pool_kernel=3, pool_stride=2),
)
FULL_HEAD = (1024, 512, 128)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and initialization of one network.

    Attributes:
        input_size: Square input side in pixels.
        input_channels: 3 (RGB) or 4 (RGB + mask).
        conv_stack: Convolutional blocks.
        head: Hidden sizes of fc6-fc8; fc9 maps to the 4 outputs.
        init_scheme: Weight initialization for conv and fc layers.
        init_std: Gaussian std for the GAUSSIAN scheme.
        mask_slice_init: Constant used for the mask slice of conv1.
    """

    input_size: int = 64
    input_channels: int = 4
    conv_stack: tuple[ConvBlock, ...] = DESK_CONV_STACK
    head: tuple[int, ...] = DESK_HEAD
    init_scheme: InitScheme = InitScheme.GAUSSIAN
    init_std: float = DEFAULT_INIT_STD
    mask_slice_init: MaskSliceInit = MaskSliceInit.LITERAL

    def __post_init__(self) -> None:
        if self.input_channels not in VARIANT_CHANNELS.values():
            raise ConfigError(
                f"input_channels must be 3 or 4, got {self.input_channels}"
            )
        if self.input_size < 1:
            raise ConfigError(f"input_size must be >= 1, got {self.input_size}")
        if not self.conv_stack:
            raise ConfigError("conv_stack must not be empty")
        if len(self.head) != 3:
            raise ConfigError(
                f"head must list 3 hidden sizes (fc6-fc8), got {self.head}"
            )
        object.__setattr__(self, "init_scheme", InitScheme(self.init_scheme))
        object.__setattr__(self, "mask_slice_init", MaskSliceInit(self.mask_slice_init))

    @property
    def variant(self) -> NetworkVariant:
        if self.input_channels == VARIANT_CHANNELS[NetworkVariant.SEMANTIC]:
            return NetworkVariant.SEMANTIC
        return NetworkVariant.RGB

    def with_variant(self, variant: NetworkVariant) -> "NetworkSpec":
        """Same spec with the input channel count of another variant."""
        return replace(self, input_channels=VARIANT_CHANNELS[variant])

    def to_dict(self) -> dict:
        data = asdict(self)
        data["init_scheme"] = self.init_scheme.value
        data["mask_slice_init"] = self.mask_slice_init.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        data = dict(data)
        if "conv_stack" in data:
            data["conv_stack"] = tuple(
                ConvBlock(**block) for block in data["conv_stack"]
            )
        if "head" in data:
            data["head"] = tuple(data["head"])
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid network spec: {e}") from e


def desk_spec(variant: NetworkVariant = NetworkVariant.SEMANTIC) -> NetworkSpec:
    """Desk-scale spec: 64x64 input, three conv + pool blocks."""
    return NetworkSpec(input_channels=VARIANT_CHANNELS[variant])


def full_scale_spec(variant: NetworkVariant = NetworkVariant.SEMANTIC) -> NetworkSpec:
    """Full-scale spec: 227x227 input and an AlexNet-shaped conv stack."""
    return NetworkSpec(
        input_size=227,
        input_channels=VARIANT_CHANNELS[variant],
        conv_stack=FULL_CONV_STACK,
        head=FULL_HEAD,
    )


def build_layers(spec: NetworkSpec) -> list[Layer]:
    """Layers for a spec, all parameters zero."""
    layers: list[Layer] = []
    channels = spec.input_channels
    for index, block in enumerate(spec.conv_stack, 1):
        layers.append(
            Conv2D(
                f"conv{index}",
                channels,
                block.out_channels,
                block.kernel,
                stride=block.stride,
                pad=block.pad,
            )
        )
        layers.append(ReLU(f"relu{index}"))
        if block.pool_kernel:
            layers.append(MaxPool(f"pool{index}", block.pool_kernel, block.pool_stride))
        channels = block.out_channels
    layers.append(Flatten("flatten"))

    # Flattened feature count from the conv stack's output shape
    probe = Network(layers, (spec.input_channels, spec.input_size, spec.input_size))
    features = probe.output_shape[0]

    # Head layers are fc6..fc9, all trained with the new-layer lr
    sizes = (features, *spec.head, OUTPUT_SIZE)
    last = len(sizes) - 2
    for offset, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:], strict=True)):
        number = FIRST_HEAD_LAYER + offset
        layers.append(FullyConnected(f"fc{number}", fan_in, fan_out, new_layer=True))
        if offset < last:
            layers.append(ReLU(f"relu_fc{number}"))
    layers.append(Softplus("positivity", offset=POSITIVITY_OFFSET))
    return layers


def _weight_std(spec: NetworkSpec, fan_in: int) -> float:
    if spec.init_scheme is InitScheme.HE:
        return float(np.sqrt(2.0 / fan_in))
    return spec.init_std


def mask_slice_value(spec: NetworkSpec) -> float:
    first = spec.conv_stack[0]
    if spec.mask_slice_init is MaskSliceInit.AVERAGE:
        return 1.0 / (first.kernel * first.kernel)
    return MASK_SLICE_VALUE


def _layer_rng(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng([root, *name.encode("utf-8")])


def init_weights(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Create and initialize a network.

    Conv and fc weights are Gaussian, biases zero. Each layer draws from its
    own generator keyed by the layer name, so the RGB and semantic arms built
    from equal seeds share every weight except the conv1 mask plane (and,
    under He init, the conv1 scale). The mask-plane slice of every conv1
    filter is set to a constant. No pretrained weights are loaded.

    Args:
        spec: Architecture.
        rng: Seeded generator; equal seeds give equal weights.

    Returns:
        The initialized network.
    """
    layers = build_layers(spec)
    root = int(rng.integers(2**63))
    for layer in layers:
        if not isinstance(layer, Conv2D | FullyConnected):
            continue
        weight = layer.params["weight"]
        fan_in = int(np.prod(weight.shape[1:]))
        std = _weight_std(spec, fan_in)
        layer_rng = _layer_rng(root, layer.name)
        if layer is layers[0] and spec.variant is NetworkVariant.SEMANTIC:
            rgb_planes = VARIANT_CHANNELS[NetworkVariant.RGB]
            rgb_shape = (weight.shape[0], rgb_planes, *weight.shape[2:])
            drawn = np.empty_like(weight)
            drawn[:, :rgb_planes] = layer_rng.normal(0.0, std, rgb_shape)
            drawn[:, rgb_planes:] = mask_slice_value(spec)
            layer.params["weight"] = drawn
        else:
            layer.params["weight"] = layer_rng.normal(0.0, std, weight.shape)
        layer.params["bias"] = np.zeros_like(layer.params["bias"])

    network = Network(layers, (spec.input_channels, spec.input_size, spec.input_size))
    network.zero_grad()
    logger.debug(
        f"Initialized {spec.variant.value} network with {network.num_params} parameters"
    )
    return network


@dataclass
class SpecPair:
    """The two ablation arms; they differ only in input_channels."""

    rgb: NetworkSpec
    semantic: NetworkSpec = field(init=False)

    def __post_init__(self) -> None:
        self.rgb = self.rgb.with_variant(NetworkVariant.RGB)
        self.semantic = self.rgb.with_variant(NetworkVariant.SEMANTIC)

    def for_variant(self, variant: NetworkVariant) -> NetworkSpec:
        return self.rgb if variant is NetworkVariant.RGB else self.semantic

"""Layers with exact forward and backward passes in float64.

Tensors are numpy arrays laid out (batch, channels, height, width) for spatial
layers and (batch, features) for fully connected ones. ``backward`` consumes
the activations cached by the last ``forward`` and accumulates parameter
gradients into ``grads``; parameters change only through an optimizer.
"""

from abc import ABC, abstractmethod

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from src.errors import ShapeMismatchError

Tensor = NDArray[np.float64]


class Layer(ABC):
    """Base class for all layers.

    Attributes:
        name: Unique name inside a network (used for checkpoints).
        new_layer: Whether the optimizer applies the new-layer lr multiplier.
        params: Named parameter tensors.
        grads: Gradients, same names and shapes as params.
    """

    def __init__(self, name: str, new_layer: bool = False) -> None:
        self.name = name
        self.new_layer = new_layer
        self.params: dict[str, Tensor] = {}
        self.grads: dict[str, Tensor] = {}

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        """Compute the output and cache what backward needs."""

    @abstractmethod
    def backward(self, grad_out: Tensor) -> Tensor:
        """Return dL/dinput and accumulate dL/dparams into grads."""

    @abstractmethod
    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Output shape (without batch) for an input shape (without batch)."""

    def zero_grad(self) -> None:
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _cached(self, value: Tensor | None) -> Tensor:
        if value is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        return value


class Conv2D(Layer):
    """2-D cross-correlation with zero padding."""

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int = 0,
        new_layer: bool = False,
    ) -> None:
        super().__init__(name, new_layer)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        self.params = {
            "weight": np.zeros((out_channels, in_channels, kernel, kernel)),
            "bias": np.zeros(out_channels),
        }
        self.zero_grad()
        self._windows: Tensor | None = None
        self._input_shape: tuple[int, ...] | None = None

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        channels, height, width = input_shape
        if channels != self.in_channels:
            raise ShapeMismatchError(
                f"{self.name} input", (self.in_channels, height, width), input_shape
            )
        out_h = (height + 2 * self.pad - self.kernel) // self.stride + 1
        out_w = (width + 2 * self.pad - self.kernel) // self.stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeMismatchError(
                f"{self.name} input too small for kernel {self.kernel}",
                (channels, self.kernel, self.kernel),
                input_shape,
            )
        return self.out_channels, out_h, out_w

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeMismatchError(
                f"{self.name} input", (-1, self.in_channels, -1, -1), x.shape
            )
        self.output_shape(x.shape[1:])
        self._input_shape = x.shape
        p = self.pad
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = sliding_window_view(padded, (self.kernel, self.kernel), axis=(2, 3))
        windows = windows[:, :, :: self.stride, :: self.stride]
        self._windows = windows
        out = np.einsum(
            "bchwij,ocij->bohw", windows, self.params["weight"], optimize=True
        )
        return out + self.params["bias"][None, :, None, None]

    def backward(self, grad_out: Tensor) -> Tensor:
        windows = self._cached(self._windows)
        input_shape = self._input_shape
        assert input_shape is not None
        weight = self.params["weight"]
        self.grads["weight"] += np.einsum(
            "bohw,bchwij->ocij", grad_out, windows, optimize=True
        )
        self.grads["bias"] += grad_out.sum(axis=(0, 2, 3))

        batch, _, height, width = input_shape
        p, s = self.pad, self.stride
        out_h, out_w = grad_out.shape[2:]
        grad_padded = np.zeros((batch, self.in_channels, height + 2 * p, width + 2 * p))
        for i in range(self.kernel):
            for j in range(self.kernel):
                contribution = np.einsum(
                    "bohw,oc->bchw", grad_out, weight[:, :, i, j], optimize=True
                )
                rows = slice(i, i + s * (out_h - 1) + 1, s)
                cols = slice(j, j + s * (out_w - 1) + 1, s)
                grad_padded[:, :, rows, cols] += contribution
        if p:
            return grad_padded[:, :, p:-p, p:-p]
        return grad_padded


class ReLU(Layer):
    """max(x, 0); the gradient at exactly 0 is 0."""

    def __init__(self, name: str) -> None:
        super().__init__(name)
        self._mask: NDArray[np.bool_] | None = None

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def forward(self, x: Tensor) -> Tensor:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._mask is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        return np.where(self._mask, grad_out, 0.0)


class MaxPool(Layer):
    """Max pooling; ties route the gradient to the first maximal element."""

    def __init__(self, name: str, kernel: int, stride: int | None = None) -> None:
        super().__init__(name)
        self.kernel = kernel
        self.stride = stride or kernel
        self._argmax: NDArray[np.intp] | None = None
        self._input_shape: tuple[int, ...] | None = None

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        channels, height, width = input_shape
        out_h = (height - self.kernel) // self.stride + 1
        out_w = (width - self.kernel) // self.stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeMismatchError(
                f"{self.name} input too small for pool {self.kernel}",
                (channels, self.kernel, self.kernel),
                input_shape,
            )
        return channels, out_h, out_w

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeMismatchError(f"{self.name} input", (-1, -1, -1, -1), x.shape)
        self.output_shape(x.shape[1:])
        self._input_shape = x.shape
        windows = sliding_window_view(x, (self.kernel, self.kernel), axis=(2, 3))
        windows = windows[:, :, :: self.stride, :: self.stride]
        flat = windows.reshape(*windows.shape[:4], self.kernel * self.kernel)
        self._argmax = flat.argmax(axis=-1)
        return np.take_along_axis(flat, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._argmax is None or self._input_shape is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        grad_in = np.zeros(self._input_shape)
        s = self.stride
        out_h, out_w = grad_out.shape[2:]
        for index in range(self.kernel * self.kernel):
            i, j = divmod(index, self.kernel)
            routed = np.where(self._argmax == index, grad_out, 0.0)
            grad_in[
                :, :, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s
            ] += routed
        return grad_in


class Flatten(Layer):
    """(batch, c, h, w) -> (batch, c*h*w)."""

    def __init__(self, name: str) -> None:
        super().__init__(name)
        self._input_shape: tuple[int, ...] | None = None

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return (int(np.prod(input_shape)),)

    def forward(self, x: Tensor) -> Tensor:
        self._input_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: Tensor) -> Tensor:
        if self._input_shape is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        return grad_out.reshape(self._input_shape)


class FullyConnected(Layer):
    """y = x W^T + b with W of shape (out, in)."""

    def __init__(
        self, name: str, in_features: int, out_features: int, new_layer: bool = False
    ) -> None:
        super().__init__(name, new_layer)
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "weight": np.zeros((out_features, in_features)),
            "bias": np.zeros(out_features),
        }
        self.zero_grad()
        self._input: Tensor | None = None

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if input_shape != (self.in_features,):
            raise ShapeMismatchError(
                f"{self.name} input", (self.in_features,), input_shape
            )
        return (self.out_features,)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatchError(
                f"{self.name} input", (x.shape[0], self.in_features), x.shape
            )
        self._input = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad_out: Tensor) -> Tensor:
        x = self._cached(self._input)
        self.grads["weight"] += grad_out.T @ x
        self.grads["bias"] += grad_out.sum(axis=0)
        return grad_out @ self.params["weight"]


class Softplus(Layer):
    """ln(1 + e^x) + offset, keeping every output strictly positive."""

    def __init__(self, name: str, offset: float = 1e-6) -> None:
        super().__init__(name)
        self.offset = offset
        self._input: Tensor | None = None

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def forward(self, x: Tensor) -> Tensor:
        self._input = x
        return np.logaddexp(0.0, x) + self.offset

    def backward(self, grad_out: Tensor) -> Tensor:
        x = self._cached(self._input)
        # d/dx softplus = logistic(x), written to avoid overflow for large |x|
        return grad_out * np.exp(-np.logaddexp(0.0, -x))

"""Sequential container of layers."""

from collections.abc import Iterator

import numpy as np

from src.errors import CheckpointError, ShapeMismatchError
from src.nn.layers import Layer, Tensor


class Network:
    """A feed-forward stack of layers.

    Attributes:
        layers: Layers in execution order; names are unique.
        input_shape: Expected input shape without batch, (channels, h, w).
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]) -> None:
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"layer names must be unique: {names}")
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.output_shape = self._infer_output_shape()

    def _infer_output_shape(self) -> tuple[int, ...]:
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def forward(self, x: Tensor) -> Tensor:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatchError(
                "network input", (x.shape[0], *self.input_shape), x.shape
            )
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"no layer named {name!r}")

    def parameters(self) -> Iterator[tuple[str, Layer, str]]:
        """Yield (qualified name, layer, param key) for every parameter."""
        for layer in self.layers:
            for key in layer.params:
                yield f"{layer.name}.{key}", layer, key

    @property
    def num_params(self) -> int:
        return sum(layer.num_params for layer in self.layers)

    def state_dict(self) -> dict[str, Tensor]:
        """Copies of all parameters keyed by qualified name."""
        return {
            name: layer.params[key].copy() for name, layer, key in self.parameters()
        }

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        """Replace all parameters.

        Raises:
            CheckpointError: On missing, unexpected or mis-shaped tensors.
        """
        expected = {name for name, _, _ in self.parameters()}
        if set(state) != expected:
            raise CheckpointError(
                f"parameter names differ: missing {sorted(expected - set(state))}, "
                f"unexpected {sorted(set(state) - expected)}"
            )
        for name, layer, key in self.parameters():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != layer.params[key].shape:
                raise CheckpointError(
                    f"{name}: expected shape {layer.params[key].shape}, "
                    f"got {value.shape}"
                )
        for name, layer, key in self.parameters():
            layer.params[key] = np.array(state[name], dtype=np.float64)
        self.zero_grad()

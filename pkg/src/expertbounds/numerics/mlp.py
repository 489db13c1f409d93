"""Small tanh feed-forward network with hand-written backward pass and plain SGD.

Houses the expert classifiers, the shared embedding network, the gating network and the
meta-expert. Weights are stored as (out, in) matrices so a layer computes ``W @ h + b``;
batches are rows, so the vectorized form is ``h @ W.T + b``.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from expertbounds.errors import DimensionError, NumericDomainError
from expertbounds.mhc.residual import mix_streams, unmix_streams_grad

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Layer weights and biases of a tanh MLP.

    Hidden layers apply tanh; the last layer is linear. When ``stream_mix`` is set, every hidden
    activation is split into ``stream_mix.shape[0]`` equal streams and mixed by that (fixed,
    doubly stochastic) matrix before feeding the next layer.
    """

    weights: tuple[Array, ...]
    biases: tuple[Array, ...]
    activation: Literal["tanh"] = "tanh"
    stream_mix: Array | None = None

    def __post_init__(self) -> None:
        if not self.weights:
            raise DimensionError("an MLP needs at least one layer")
        if len(self.weights) != len(self.biases):
            raise DimensionError(f"{len(self.weights)} weight matrices but {len(self.biases)} bias vectors")
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i - 1} has {self.weights[i - 1].shape[0]} outputs"
                )
        if self.stream_mix is not None:
            streams = self.stream_mix.shape[0]
            for w in self.weights[:-1]:
                if w.shape[0] % streams:
                    raise DimensionError(f"hidden width {w.shape[0]} is not divisible into {streams} streams")

    @property
    def input_dim(self) -> int:
        """Width of the network input."""
        return int(self.weights[0].shape[1])

    @property
    def output_dim(self) -> int:
        """Width of the network output."""
        return int(self.weights[-1].shape[0])

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Input width followed by every layer's output width."""
        return (self.input_dim, *(int(w.shape[0]) for w in self.weights))

    def shapes(self) -> tuple[tuple[int, ...], ...]:
        """Shapes of every weight and bias, in storage order."""
        return tuple(a.shape for pair in zip(self.weights, self.biases, strict=True) for a in pair)

    def flat(self) -> Array:
        """All weights and biases concatenated into one vector."""
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases, strict=True) for a in pair])

    def with_flat(self, values: Array) -> "MlpParams":
        """Rebuild params of the same shape from a flat vector."""
        weights, biases = [], []
        offset = 0
        for w, b in zip(self.weights, self.biases, strict=True):
            weights.append(values[offset : offset + w.size].reshape(w.shape).copy())
            offset += w.size
            biases.append(values[offset : offset + b.size].copy())
            offset += b.size
        if offset != values.size:
            raise DimensionError(f"flat vector has {values.size} entries, params need {offset}")
        return MlpParams(tuple(weights), tuple(biases), self.activation, self.stream_mix)

    def equals(self, other: "MlpParams") -> bool:
        """Exact equality of every array."""
        if self.shapes() != other.shapes():
            return False
        return bool(np.array_equal(self.flat(), other.flat()))


@dataclass(frozen=True, eq=False)
class MlpCache:
    """Activation record of a forward pass, consumed by :func:`mlp_backward`."""

    layer_inputs: tuple[Array, ...]
    activations: tuple[Array, ...]
    batched: bool
    signature: tuple[tuple[int, ...], ...]


class OptimizerState(BaseModel):
    """Plain SGD state."""

    learning_rate: float = Field(gt=0.0)
    step_count: int = Field(default=0, ge=0)


class GradCheckReport(BaseModel):
    """Outcome of comparing analytic gradients with central finite differences."""

    max_relative_error: float
    checked_coordinates: int
    passed: bool


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator, stream_mix: Array | None = None) -> MlpParams:
    """Initialize weights with N(0, 1/fan_in) and zero biases.

    Args:
        layer_sizes: Input width followed by each layer's output width, e.g. ``(18, 32, 3)``.
        rng: Generator to draw weights from.
        stream_mix: Optional doubly stochastic matrix mixing hidden streams.
    """
    if len(layer_sizes) < 2:
        raise DimensionError("layer_sizes needs an input width and at least one layer")
    weights = tuple(
        rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:], strict=True)
    )
    biases = tuple(np.zeros(fan_out) for fan_out in layer_sizes[1:])
    return MlpParams(weights, biases, "tanh", stream_mix)


def mlp_forward(params: MlpParams, x: ArrayLike) -> tuple[Array, MlpCache]:
    """Run the network on one input vector or a batch of row vectors.

    Returns:
        Tuple of (logits, cache). Logits are 1-D for a 1-D input and (B, out) for a batch.

    Raises:
        DimensionError: If the input width does not match the first layer.
    """
    arr = np.asarray(x, dtype=np.float64)
    batched = arr.ndim == 2
    h = arr if batched else arr[np.newaxis, :]
    if h.ndim != 2 or h.shape[1] != params.input_dim:
        raise DimensionError(f"input shape {arr.shape} does not match network input width {params.input_dim}")
    if not np.all(np.isfinite(h)):
        raise NumericDomainError("network input contains non-finite entries")

    layer_inputs: list[Array] = []
    activations: list[Array] = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
        layer_inputs.append(h)
        z = h @ w.T + b
        if i == last:
            h = z
            break
        a = np.tanh(z)
        activations.append(a)
        h = mix_streams(a, params.stream_mix) if params.stream_mix is not None else a

    cache = MlpCache(tuple(layer_inputs), tuple(activations), batched, params.shapes())
    return (h if batched else h[0]), cache


def mlp_backward(params: MlpParams, cache: MlpCache, d_logits: ArrayLike) -> MlpParams:
    """Back-propagate dLoss/dLogits through the network.

    Gradients of a batch are summed over rows; scale ``d_logits`` by 1/B for a mean loss.

    Returns:
        Gradient with exactly the shapes of ``params`` (carried in an ``MlpParams``).

    Raises:
        DimensionError: If the cache came from a network of a different shape or the
            gradient does not match the cached batch.
    """
    if cache.signature != params.shapes():
        raise DimensionError("activation cache does not belong to these params")
    d = np.asarray(d_logits, dtype=np.float64)
    if not cache.batched:
        d = d[np.newaxis, :]
    batch = cache.layer_inputs[0].shape[0]
    if d.shape != (batch, params.output_dim):
        raise DimensionError(f"gradient shape {d.shape} does not match logits ({batch}, {params.output_dim})")

    n_layers = len(params.weights)
    grad_w: list[Array] = [np.empty(0)] * n_layers
    grad_b: list[Array] = [np.empty(0)] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = d.T @ cache.layer_inputs[i]
        grad_b[i] = d.sum(axis=0)
        if i == 0:
            break
        dh = d @ params.weights[i]
        if params.stream_mix is not None:
            dh = unmix_streams_grad(dh, params.stream_mix)
        a = cache.activations[i - 1]
        d = dh * (1.0 - a * a)
    return MlpParams(tuple(grad_w), tuple(grad_b), params.activation, params.stream_mix)


def mlp_input_grad(params: MlpParams, cache: MlpCache, d_logits: ArrayLike) -> Array:
    """Back-propagate dLoss/dLogits to the network input, row by row.

    Returns:
        Gradient with the shape of the cached input (1-D for a 1-D input).

    Raises:
        DimensionError: If the cache or the gradient does not match the network.
    """
    if cache.signature != params.shapes():
        raise DimensionError("activation cache does not belong to these params")
    d = np.asarray(d_logits, dtype=np.float64)
    if not cache.batched:
        d = d[np.newaxis, :]
    batch = cache.layer_inputs[0].shape[0]
    if d.shape != (batch, params.output_dim):
        raise DimensionError(f"gradient shape {d.shape} does not match logits ({batch}, {params.output_dim})")

    for i in range(len(params.weights) - 1, 0, -1):
        dh = d @ params.weights[i]
        if params.stream_mix is not None:
            dh = unmix_streams_grad(dh, params.stream_mix)
        a = cache.activations[i - 1]
        d = dh * (1.0 - a * a)
    dx = d @ params.weights[0]
    return dx if cache.batched else dx[0]


def sgd_step(params: MlpParams, grads: MlpParams, state: OptimizerState) -> tuple[MlpParams, OptimizerState]:
    """One plain SGD update: ``param -= learning_rate * grad``.

    Raises:
        DimensionError: If the gradient shapes differ from the params.
    """
    if grads.shapes() != params.shapes():
        raise DimensionError("gradient shapes do not mirror params")
    lr = state.learning_rate
    weights = tuple(w - lr * g for w, g in zip(params.weights, grads.weights, strict=True))
    biases = tuple(b - lr * g for b, g in zip(params.biases, grads.biases, strict=True))
    updated = MlpParams(weights, biases, params.activation, params.stream_mix)
    return updated, state.model_copy(update={"step_count": state.step_count + 1})


def add_grads(a: MlpParams, b: MlpParams) -> MlpParams:
    """Element-wise sum of two gradients of the same shape."""
    if a.shapes() != b.shapes():
        raise DimensionError("cannot add gradients of different shapes")
    weights = tuple(x + y for x, y in zip(a.weights, b.weights, strict=True))
    biases = tuple(x + y for x, y in zip(a.biases, b.biases, strict=True))
    return MlpParams(weights, biases, a.activation, a.stream_mix)


LossFn = Callable[[MlpParams], tuple[float, MlpParams]]


def grad_check(
    params: MlpParams,
    loss_fn: LossFn,
    tolerance: float,
    epsilon: float = 1e-5,
    max_coordinates: int = 4096,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Args:
        params: Point at which to check.
        loss_fn: Returns (loss, analytic gradient) for given params.
        tolerance: Pass iff the max relative error is below this.
        epsilon: Finite-difference step.
        max_coordinates: Above this many parameters a seeded sample of coordinates is checked.
        seed: Seed for the coordinate sample.
    """
    _, analytic = loss_fn(params)
    base = params.flat()
    analytic_flat = analytic.flat()
    if base.size <= max_coordinates:
        coords = np.arange(base.size)
    else:
        coords = np.sort(np.random.default_rng(seed).choice(base.size, size=max_coordinates, replace=False))

    worst = 0.0
    for idx in coords:
        plus = base.copy()
        plus[idx] += epsilon
        minus = base.copy()
        minus[idx] -= epsilon
        numeric = (loss_fn(params.with_flat(plus))[0] - loss_fn(params.with_flat(minus))[0]) / (2.0 * epsilon)
        a = float(analytic_flat[idx])
        rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
        worst = max(worst, rel)
    return GradCheckReport(max_relative_error=worst, checked_coordinates=int(coords.size), passed=worst < tolerance)

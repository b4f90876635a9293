"""Minimal reverse-mode differentiable MLP used as the 2D velocity field.

The architecture is fixed: a fully connected network with tanh hidden
layers and a linear output layer. The input is the spatial point with the
scalar time appended as one extra coordinate, so ``input_dim = d + 1``.
All arithmetic is 64-bit.

Two gradient routes are exposed:

* ``vjp_input``  - cotangent pulled back to the spatial input (drives the
  latent-space reward gradient),
* ``vjp_params`` - cotangent pulled back to the parameters (drives
  training).

Both operate on the tape cached by ``forward`` and are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkParams",
    "EvaluationTape",
    "ParamGrads",
    "init_params",
    "zero_params",
    "forward",
    "forward_batch",
    "vjp_input",
    "vjp_input_batch",
    "vjp_params",
]


class ShapeError(ValueError):
    """Parameter/input shapes do not chain consistently."""


@dataclass(frozen=True)
class NetworkParams:
    """Weights and biases of the velocity MLP.

    ``weights[l]`` has shape ``(fan_in, fan_out)`` and ``biases[l]`` shape
    ``(fan_out,)``. Layer 0 maps ``input_dim -> hidden_width``, the last
    layer maps ``hidden_width -> output_dim``, and there are
    ``hidden_depth + 1`` layers in total.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_dim: int
    hidden_width: int
    hidden_depth: int
    output_dim: int

    def __post_init__(self):
        expected = layer_dims(self.input_dim, self.hidden_width,
                              self.hidden_depth, self.output_dim)
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ShapeError(
                f"expected {len(expected)} layers, got {len(self.weights)} weights "
                f"and {len(self.biases)} biases")
        for l, (din, dout) in enumerate(expected):
            if self.weights[l].shape != (din, dout):
                raise ShapeError(
                    f"layer {l}: weight shape {self.weights[l].shape} != {(din, dout)}")
            if self.biases[l].shape != (dout,):
                raise ShapeError(
                    f"layer {l}: bias shape {self.biases[l].shape} != {(dout,)}")
        for arr in (*self.weights, *self.biases):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite parameter entries")

    @property
    def n_layers(self) -> int:
        return self.hidden_depth + 1

    def spatial_dim(self) -> int:
        """Dimension of the spatial input (time coordinate excluded)."""
        return self.input_dim - 1


@dataclass(frozen=True)
class EvaluationTape:
    """Per-layer values cached by one forward pass.

    ``inputs`` is the augmented input ``[x, t]``; ``pre[l]`` and ``post[l]``
    are the pre- and post-activation values of layer ``l``. For the final
    (linear) layer ``post`` equals ``pre``. Length is ``hidden_depth + 1``.
    """

    inputs: np.ndarray
    pre: tuple[np.ndarray, ...]
    post: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class ParamGrads:
    """Gradient container shaped like :class:`NetworkParams`."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def layer_dims(input_dim: int, hidden_width: int, hidden_depth: int,
               output_dim: int) -> list[tuple[int, int]]:
    """(fan_in, fan_out) for every layer of the fixed architecture."""
    dims = [(input_dim, hidden_width)]
    dims += [(hidden_width, hidden_width)] * (hidden_depth - 1)
    dims.append((hidden_width, output_dim))
    return dims


def init_params(seed: int, scale: float = 1.0, *, input_dim: int = 3,
                hidden_width: int = 128, hidden_depth: int = 4,
                output_dim: int = 2) -> NetworkParams:
    """Seeded zero-mean uniform init with fan-in scaling; biases zero.

    Weights are drawn from U(-a, a) with a = scale * sqrt(3 / fan_in), so
    each entry has standard deviation ``scale / sqrt(fan_in)``.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for din, dout in layer_dims(input_dim, hidden_width, hidden_depth, output_dim):
        a = scale * np.sqrt(3.0 / din)
        weights.append(rng.uniform(-a, a, size=(din, dout)))
        biases.append(np.zeros(dout))
    return NetworkParams(tuple(weights), tuple(biases), input_dim,
                         hidden_width, hidden_depth, output_dim)


def zero_params(*, input_dim: int = 3, hidden_width: int = 128,
                hidden_depth: int = 4, output_dim: int = 2) -> NetworkParams:
    """All-zero network; its velocity field is identically zero."""
    weights = []
    biases = []
    for din, dout in layer_dims(input_dim, hidden_width, hidden_depth, output_dim):
        weights.append(np.zeros((din, dout)))
        biases.append(np.zeros(dout))
    return NetworkParams(tuple(weights), tuple(biases), input_dim,
                         hidden_width, hidden_depth, output_dim)


def forward(params: NetworkParams, x: np.ndarray, t: float) -> tuple[np.ndarray, EvaluationTape]:
    """Evaluate the velocity at one point, returning the output and tape."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.spatial_dim(),):
        raise ShapeError(f"x has shape {x.shape}, expected ({params.spatial_dim()},)")
    h = np.concatenate([x, [float(t)]])
    inputs = h
    pre = []
    post = []
    for l in range(params.n_layers):
        z = h @ params.weights[l] + params.biases[l]
        pre.append(z)
        h = np.tanh(z) if l < params.n_layers - 1 else z
        post.append(h)
    return post[-1], EvaluationTape(inputs, tuple(pre), tuple(post))


def forward_batch(params: NetworkParams, x: np.ndarray,
                  t: np.ndarray | float) -> tuple[np.ndarray, EvaluationTape]:
    """Vectorized forward over rows of ``x`` (shape (n, d)).

    ``t`` may be a scalar (broadcast) or an array of shape (n,).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if x.shape != (n, params.spatial_dim()):
        raise ShapeError(f"x has shape {x.shape}, expected (n, {params.spatial_dim()})")
    tcol = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)).reshape(n, 1)
    h = np.concatenate([x, tcol], axis=1)
    inputs = h
    pre = []
    post = []
    for l in range(params.n_layers):
        z = h @ params.weights[l] + params.biases[l]
        pre.append(z)
        h = np.tanh(z) if l < params.n_layers - 1 else z
        post.append(h)
    return post[-1], EvaluationTape(inputs, tuple(pre), tuple(post))


def _backprop_deltas(params: NetworkParams, tape: EvaluationTape,
                     cotangent: np.ndarray) -> list[np.ndarray]:
    """Per-layer pre-activation cotangents, output layer first reversed to
    natural order. Works for both single (d,) and batched (n, d) tapes."""
    deltas = [np.asarray(cotangent, dtype=np.float64)]
    for l in range(params.n_layers - 1, 0, -1):
        da = deltas[-1] @ params.weights[l].T
        dz = da * (1.0 - tape.post[l - 1] ** 2)
        deltas.append(dz)
    deltas.reverse()
    return deltas


def vjp_input(params: NetworkParams, tape: EvaluationTape,
              cotangent: np.ndarray) -> np.ndarray:
    """J^T u where J is the Jacobian of the output w.r.t. the spatial input.

    The cotangent on the appended time coordinate is discarded.
    """
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if cotangent.shape != (params.output_dim,):
        raise ShapeError(f"cotangent shape {cotangent.shape} != ({params.output_dim},)")
    if tape.pre[0].shape[-1] != params.hidden_width:
        raise ValueError("tape does not match params")
    deltas = _backprop_deltas(params, tape, cotangent)
    dx_full = deltas[0] @ params.weights[0].T
    return dx_full[: params.spatial_dim()]


def vjp_input_batch(params: NetworkParams, tape: EvaluationTape,
                    cotangent: np.ndarray) -> np.ndarray:
    """Batched :func:`vjp_input` for a tape produced by ``forward_batch``."""
    deltas = _backprop_deltas(params, tape, cotangent)
    dx_full = deltas[0] @ params.weights[0].T
    return dx_full[:, : params.spatial_dim()]


def vjp_params(params: NetworkParams, tape: EvaluationTape,
               cotangent: np.ndarray) -> ParamGrads:
    """Parameter gradient of <cotangent, output> for a single-point tape.

    For a batched tape the result is the gradient of the batch sum.
    """
    deltas = _backprop_deltas(params, tape, cotangent)
    acts = [tape.inputs] + [tape.post[l] for l in range(params.n_layers - 1)]
    dW = []
    db = []
    batched = tape.inputs.ndim == 2
    for l in range(params.n_layers):
        if batched:
            dW.append(acts[l].T @ deltas[l])
            db.append(deltas[l].sum(axis=0))
        else:
            dW.append(np.outer(acts[l], deltas[l]))
            db.append(deltas[l].copy())
    return ParamGrads(tuple(dW), tuple(db))

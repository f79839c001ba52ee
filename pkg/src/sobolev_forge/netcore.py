"""Tensor and network arithmetic for convolutional residual networks.

Conventions fixed here and relied on by every other module:

* a filter ``W`` of shape (Cout, K, Cin) acts on ``Z`` of shape (D, Cin) by
  the one-sided stride-one convolution ``Y[i, j] = sum_{k,l} W[j,k,l] *
  Z[i+k, l]`` (0-based taps), reading zeros past row D-1;
* a residual block applies ReLU after every conv layer, including the last,
  and then adds the identity shortcut;
* a full model pads x into column 0 of a D x C matrix, runs the blocks in
  order, and finishes with the fully-connected readout
  ``sum(fc_weight * Z) + fc_bias``.

All arithmetic is float64.  Models are immutable after construction; forward
evaluation is pure.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when tensor shapes do not compose."""


def _as_f64(a):
    return np.asarray(a, dtype=np.float64)


@dataclass
class FilterTensor:
    """Convolution filter with entries indexed (out-channel, tap, in-channel)."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = _as_f64(self.entries)
        if self.entries.ndim != 3:
            raise ShapeError(f"filter must be 3-d, got shape {self.entries.shape}")
        if self.entries.shape[1] < 1:
            raise ShapeError(f"filter width must be >= 1, got shape {self.entries.shape}")

    @property
    def out_channels(self):
        return self.entries.shape[0]

    @property
    def width(self):
        return self.entries.shape[1]

    @property
    def in_channels(self):
        return self.entries.shape[2]


@dataclass
class ResidualBlockSpec:
    """One residual block: an ordered conv stack plus the implicit shortcut.

    ``biases[l]`` is a full D x Cout matrix (builders emit channel-constant
    biases, but the representation does not require it).  The first layer's
    input channel count must equal the last layer's output channel count so
    the identity shortcut is well-typed.
    """

    filters: list
    biases: list

    def __post_init__(self):
        self.biases = [_as_f64(b) for b in self.biases]
        if len(self.filters) != len(self.biases) or len(self.filters) < 1:
            raise ShapeError(
                f"block needs matching filter/bias lists, got {len(self.filters)} filters "
                f"and {len(self.biases)} biases"
            )
        for f, b in zip(self.filters, self.biases):
            if b.ndim != 2 or b.shape[1] != f.out_channels:
                raise ShapeError(
                    f"bias shape {b.shape} does not match filter out-channels {f.out_channels}"
                )
        for prev, nxt in zip(self.filters, self.filters[1:]):
            if nxt.in_channels != prev.out_channels:
                raise ShapeError(
                    f"layer shapes do not compose: {prev.entries.shape} then {nxt.entries.shape}"
                )
        if self.filters[0].in_channels != self.filters[-1].out_channels:
            raise ShapeError(
                "block must map D x C to D x C: first input channels "
                f"{self.filters[0].in_channels} != last output channels "
                f"{self.filters[-1].out_channels}"
            )

    @property
    def depth(self):
        return len(self.filters)


@dataclass
class ConvResNetModel:
    """Padding layer + residual blocks + fully-connected readout."""

    input_dim: int
    padding_channels: int
    blocks: list
    fc_weight: np.ndarray
    fc_bias: float
    first_row_only: bool = False

    def __post_init__(self):
        self.fc_weight = _as_f64(self.fc_weight)
        self.fc_bias = float(self.fc_bias)
        D, C = self.input_dim, self.padding_channels
        if self.fc_weight.shape != (D, C):
            raise ShapeError(f"fc weight shape {self.fc_weight.shape} != ({D}, {C})")
        for blk in self.blocks:
            if blk.filters[0].in_channels != C:
                raise ShapeError(
                    f"block input channels {blk.filters[0].in_channels} != padding channels {C}"
                )
            for b in blk.biases:
                if b.shape[0] != D:
                    raise ShapeError(f"bias rows {b.shape[0]} != input dim {D}")
        if self.first_row_only and np.any(self.fc_weight[1:, :] != 0.0):
            raise ShapeError("first_row_only model has nonzero fc entries below row 1")


@dataclass
class MlpModel:
    """Plain ReLU MLP: alternating affine/ReLU with a final affine layer."""

    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [_as_f64(w) for w in self.weights]
        self.biases = [_as_f64(b) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("weights and biases must be equal-length, nonempty lists")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[0],):
                raise ShapeError(f"bias shape {b.shape} != ({w.shape[0]},)")
        for prev, nxt in zip(self.weights, self.weights[1:]):
            if nxt.shape[1] != prev.shape[0]:
                raise ShapeError(f"layer shapes do not compose: {prev.shape} then {nxt.shape}")

    @property
    def depth(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def width(self):
        return max(w.shape[0] for w in self.weights)

    @property
    def kappa(self):
        return max(max(np.max(np.abs(w)), np.max(np.abs(b))) for w, b in zip(self.weights, self.biases))


@dataclass
class NetClassParams:
    """Measured architecture-class membership of a concrete model."""

    M: int
    L: int
    J: int
    K: int
    kappa1: float
    kappa2: float
    first_row_only: bool = field(default=False)


def conv_forward(filt: FilterTensor, Z: np.ndarray) -> np.ndarray:
    """Bare one-sided stride-one convolution (no bias, no ReLU)."""
    Z = _as_f64(Z)
    if Z.ndim != 2 or Z.shape[1] != filt.in_channels:
        raise ShapeError(
            f"input shape {Z.shape} does not match filter in-channels "
            f"{filt.entries.shape} (expected D x {filt.in_channels})"
        )
    D = Z.shape[0]
    w = filt.entries
    Y = np.zeros((D, filt.out_channels))
    for k in range(min(filt.width, D)):
        if k == 0:
            Y += Z @ w[:, 0, :].T
        else:
            Y[: D - k, :] += Z[k:, :] @ w[:, k, :].T
    return Y


def block_stack(block: ResidualBlockSpec, Z_batch: np.ndarray) -> np.ndarray:
    """Conv stack of a block over a batch (n, D, C): ReLU after every layer."""
    out = Z_batch
    for f, b in zip(block.filters, block.biases):
        out = kernels.conv_layer(f.entries, b, out)
    return out


def block_forward(block: ResidualBlockSpec, Z: np.ndarray) -> np.ndarray:
    """Residual block: conv stack plus identity shortcut."""
    Z = _as_f64(Z)
    if Z.ndim != 2 or Z.shape[1] != block.filters[0].in_channels:
        raise ShapeError(
            f"input shape {Z.shape} does not match block input channels "
            f"{block.filters[0].in_channels}"
        )
    return block_stack(block, Z[None])[0] + Z


def pad_input(x_batch: np.ndarray, channels: int) -> np.ndarray:
    """P(x): place x in column 0 of a D x C matrix, zeros elsewhere."""
    n, D = x_batch.shape
    Z = np.zeros((n, D, channels))
    Z[:, :, 0] = x_batch
    return Z


def resnet_forward_batch(net: ConvResNetModel, X: np.ndarray) -> np.ndarray:
    """Forward pass over a batch of inputs, shape (n, D) -> (n,)."""
    X = _as_f64(X)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"input shape {X.shape} != (n, {net.input_dim})")
    Z = pad_input(X, net.padding_channels)
    for blk in net.blocks:
        Z = Z + block_stack(blk, Z)
    return np.tensordot(Z, net.fc_weight, axes=([1, 2], [0, 1])) + net.fc_bias


def resnet_forward(net: ConvResNetModel, x: np.ndarray) -> float:
    """Forward pass at a single input vector of length D."""
    x = _as_f64(x)
    if x.shape != (net.input_dim,):
        raise ShapeError(f"input shape {x.shape} != ({net.input_dim},)")
    return float(resnet_forward_batch(net, x[None])[0])


def mlp_forward_batch(mlp: MlpModel, X: np.ndarray) -> np.ndarray:
    """MLP forward over a batch, shape (n, in) -> (n, out)."""
    X = _as_f64(X)
    if X.ndim != 2 or X.shape[1] != mlp.in_dim:
        raise ShapeError(f"input shape {X.shape} != (n, {mlp.in_dim})")
    out = X
    last = mlp.depth - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out = kernels.mlp_layer(w, b, out, relu=(i != last))
    return out


def mlp_forward(mlp: MlpModel, x: np.ndarray) -> np.ndarray:
    """MLP forward at a single input vector."""
    x = _as_f64(x)
    if x.ndim == 0:
        x = x[None]
    if x.shape != (mlp.in_dim,):
        raise ShapeError(f"input shape {x.shape} != ({mlp.in_dim},)")
    return mlp_forward_batch(mlp, x[None])[0]


def audit_class(net: ConvResNetModel) -> NetClassParams:
    """Measure (M, L, J, K, kappa1, kappa2) of a concrete model.

    J is the maximum channel count seen anywhere (padding included); kappa2
    covers both the fc weight and the fc bias.
    """
    M = len(net.blocks)
    L = max((blk.depth for blk in net.blocks), default=0)
    J = net.padding_channels
    K = 0
    kappa1 = 0.0
    for blk in net.blocks:
        for f, b in zip(blk.filters, blk.biases):
            J = max(J, f.in_channels, f.out_channels)
            K = max(K, f.width)
            kappa1 = max(kappa1, float(np.max(np.abs(f.entries))), float(np.max(np.abs(b))))
    kappa2 = max(float(np.max(np.abs(net.fc_weight))), abs(net.fc_bias))
    fro = bool(np.all(net.fc_weight[1:, :] == 0.0)) if net.input_dim > 1 else True
    return NetClassParams(M=M, L=L, J=J, K=K, kappa1=kappa1, kappa2=kappa2, first_row_only=fro)

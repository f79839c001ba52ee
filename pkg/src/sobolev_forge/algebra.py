"""Structural transformations: MLP-to-CNN realization, composition of CNN
functions, channel-parallel grouping of sums, and assembly of a list of CNNs
into one convolutional residual network.

A ``CnnFunction`` is a scalar-valued map R^D -> R given by a padding of x
into a single input channel, a conv stack (ReLU after every layer), and a
fully-connected readout whose weight lives in the first row only.  The
MLP-to-CNN realization works in two phases:

* gather: max(1, D-1) shift layers move x_0..x_{D-1} into row 0 as
  positive/negative channel pairs (signed values cannot live in a single
  post-ReLU channel);
* compute: each MLP layer becomes a 1-tap conv layer acting row-wise, so
  garbage rows never contaminate row 0; the final affine is emitted as a
  +/- pair read by the fc layer with weights +-1.

The ResNet assembly reserves two accumulator channels holding the positive
and negative parts of the running sum; each block computes its summand,
splits it, and adds it through the identity shortcut.  Member fc weights are
rescaled by s = min(1, kappa1/kappa2) before entering conv filters and the
model fc multiplies by 1/s, so conv magnitudes never exceed kappa1 and the
model fc stays within kappa2 * max(1, 1/kappa1).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .netcore import FilterTensor, ResidualBlockSpec, ConvResNetModel, MlpModel, ShapeError


@dataclass
class CnnFunction:
    """Scalar CNN f(x) = fc . ConvStack(P(x)) with a first-row-only readout."""

    input_dim: int
    conv_stack: list  # ordered (FilterTensor, bias matrix (rows, Cout))
    fc_weight: np.ndarray
    fc_bias: float
    first_row_only: bool = True
    input_pair_layer: bool = False  # layer 0 encodes the raw input as +/- pairs

    def __post_init__(self):
        self.fc_weight = np.asarray(self.fc_weight, dtype=np.float64)
        self.fc_bias = float(self.fc_bias)
        if self.first_row_only and self.fc_weight.shape[0] > 1:
            if np.any(self.fc_weight[1:, :] != 0.0):
                raise ShapeError("first_row_only CnnFunction has nonzero fc rows below row 1")

    @property
    def depth(self):
        return len(self.conv_stack)

    @property
    def width(self):
        return max(max(f.out_channels, f.in_channels) for f, _ in self.conv_stack)

    @property
    def filter_size(self):
        return max(f.width for f, _ in self.conv_stack)

    @property
    def kappa1(self):
        return max(
            max(np.max(np.abs(f.entries)), np.max(np.abs(b))) for f, b in self.conv_stack
        )

    @property
    def kappa2(self):
        return max(float(np.max(np.abs(self.fc_weight))), abs(self.fc_bias))

    def forward(self, X):
        """Batch forward: (n, D) -> (n,)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"input shape {X.shape} != (n, {self.input_dim})")
        Z = X[:, :, None]
        for f, b in self.conv_stack:
            Z = kernels.conv_layer(f.entries, b, Z)
        return np.tensordot(Z, self.fc_weight, axes=([1, 2], [0, 1])) + self.fc_bias

    def __call__(self, x):
        return float(self.forward(np.atleast_1d(np.asarray(x, dtype=np.float64))[None])[0])


def _const_bias(D, per_channel):
    return np.tile(np.asarray(per_channel, dtype=np.float64), (D, 1))


def mlp_to_cnn(mlp: MlpModel, K: int) -> CnnFunction:
    """Realize a scalar-output MLP as a CnnFunction.

    Depth grows by the gather phase only (max(1, D-1) layers <= D), channels
    stay within max(2D, MLP widths) <= 4J, and conv weight magnitudes equal
    the MLP's.  Output agrees with mlp_forward pointwise (exactly, up to
    float reassociation).
    """
    D = mlp.in_dim
    if mlp.out_dim != 1:
        raise ShapeError(f"CNN realization needs scalar output, got {mlp.out_dim}")
    if K < 2 or K > max(D, 2):
        raise ValueError(f"filter size K={K} out of range [2, {max(D, 2)}]")
    stack = []
    if D == 1:
        w = np.zeros((2, 1, 1))
        w[0, 0, 0] = 1.0
        w[1, 0, 0] = -1.0
        stack.append((FilterTensor(w), np.zeros((1, 2))))
    else:
        # gather layer 1: pair 0 stays, pairs 1..D-1 shift up once
        w = np.zeros((2 * D, 2, 1))
        w[0, 0, 0] = 1.0
        w[1, 0, 0] = -1.0
        for d in range(1, D):
            w[2 * d, 1, 0] = 1.0
            w[2 * d + 1, 1, 0] = -1.0
        stack.append((FilterTensor(w), np.zeros((D, 2 * D))))
        for tau in range(2, D):
            w = np.zeros((2 * D, 2, 2 * D))
            for d in range(D):
                tap = 0 if d <= tau - 1 else 1
                w[2 * d, tap, 2 * d] = 1.0
                w[2 * d + 1, tap, 2 * d + 1] = 1.0
            stack.append((FilterTensor(w), np.zeros((D, 2 * D))))

    rows = 1 if D == 1 else D
    for t, (Wt, bt) in enumerate(zip(mlp.weights, mlp.biases)):
        last = t == mlp.depth - 1
        if t == 0:
            # read the gathered +/- pairs
            src = np.zeros((Wt.shape[0], 2 * D))
            src[:, 0::2] = Wt
            src[:, 1::2] = -Wt
        else:
            src = Wt
        if last:
            w = np.zeros((2, 1, src.shape[1]))
            w[0, 0, :] = src[0]
            w[1, 0, :] = -src[0]
            stack.append((FilterTensor(w), _const_bias(rows, [bt[0], -bt[0]])))
        else:
            w = src[:, None, :].copy()
            stack.append((FilterTensor(w), _const_bias(rows, bt)))

    fc = np.zeros((D, 2))
    fc[0, 0] = 1.0
    fc[0, 1] = -1.0
    return CnnFunction(D, stack, fc, 0.0, first_row_only=True, input_pair_layer=(D == 1))


def compose_cnn(f1: CnnFunction, f2: CnnFunction) -> CnnFunction:
    """Realize f2 . f1 as one CnnFunction; depth adds exactly.

    f1 maps R^D -> R and f2 maps R -> R. A bridge layer evaluates f1's
    readout into the +/- pair representation that f2's first layer expects,
    replacing f2's own input-pair layer.
    """
    if not (f1.first_row_only and f2.first_row_only):
        raise ShapeError("composition requires first-row-only readouts")
    if f2.input_dim != 1 or not f2.input_pair_layer:
        raise ShapeError("f2 must be a scalar-input CNN with an input pair layer")
    D = f1.input_dim
    last_w = f1.conv_stack[-1][0].out_channels
    w = np.zeros((2, 1, last_w))
    w[0, 0, :] = f1.fc_weight[0, :]
    w[1, 0, :] = -f1.fc_weight[0, :]
    bridge = (FilterTensor(w), _const_bias(D, [f1.fc_bias, -f1.fc_bias]))
    stack = list(f1.conv_stack) + [bridge]
    for f, b in f2.conv_stack[1:]:
        stack.append((f, _const_bias(D, b[0])))
    fc = np.zeros((D, f2.fc_weight.shape[1]))
    fc[0, :] = f2.fc_weight[0, :]
    return CnnFunction(
        D, stack, fc, f2.fc_bias, first_row_only=True, input_pair_layer=f1.input_pair_layer
    )


def extend_cnn_depth(f: CnnFunction, depth: int) -> CnnFunction:
    """Append exact identity conv layers (all channels are post-ReLU, hence
    nonnegative) until the stack has the requested depth."""
    if f.depth > depth:
        raise ShapeError(f"cannot shrink stack: depth {f.depth} > {depth}")
    stack = list(f.conv_stack)
    rows = stack[-1][1].shape[0]
    while len(stack) < depth:
        C = stack[-1][0].out_channels
        stack.append((FilterTensor(np.eye(C)[:, None, :]), np.zeros((rows, C))))
    return CnnFunction(
        f.input_dim, stack, f.fc_weight, f.fc_bias, f.first_row_only, f.input_pair_layer
    )


def _check_shared(cnns):
    depth = cnns[0].depth
    D = cnns[0].input_dim
    for g in cnns:
        if g.depth != depth or g.input_dim != D:
            raise ShapeError(
                f"heterogeneous architectures: depth/dim ({g.depth}, {g.input_dim}) "
                f"vs ({depth}, {D})"
            )
        if not g.first_row_only:
            raise ShapeError("all nets must be first-row-only")


def parallel_sum(cnns, group_width: int):
    """Group n0 same-architecture CNNs into ceil(n0/c) wider CNNs, c = floor(Jt/J0),
    whose sum equals the sum of the inputs (up to float reassociation).

    Members of a group run in disjoint channel blocks reading the shared
    input channel; the group fc concatenates member readouts, so grouping
    preserves kappa.
    """
    _check_shared(cnns)
    J0 = max(g.width for g in cnns)
    if group_width < J0:
        raise ValueError(f"group width {group_width} < member width {J0}")
    c = group_width // J0
    groups = []
    for i0 in range(0, len(cnns), c):
        members = cnns[i0 : i0 + c]
        if len(members) == 1:
            groups.append(members[0])
            continue
        stack = []
        for ell in range(members[0].depth):
            K = max(g.conv_stack[ell][0].width for g in members)
            couts = [g.conv_stack[ell][0].out_channels for g in members]
            cins = [g.conv_stack[ell][0].in_channels for g in members]
            rows = members[0].conv_stack[ell][1].shape[0]
            if ell == 0:
                w = np.zeros((sum(couts), K, 1))
                r0 = 0
                for g, co in zip(members, couts):
                    fe = g.conv_stack[0][0].entries
                    w[r0 : r0 + co, : fe.shape[1], :] = fe
                    r0 += co
            else:
                w = np.zeros((sum(couts), K, sum(cins)))
                r0 = c0 = 0
                for g, co, ci in zip(members, couts, cins):
                    fe = g.conv_stack[ell][0].entries
                    w[r0 : r0 + co, : fe.shape[1], c0 : c0 + ci] = fe
                    r0 += co
                    c0 += ci
            b = np.hstack([g.conv_stack[ell][1] for g in members])
            stack.append((FilterTensor(w), b))
        D = members[0].input_dim
        fc = np.zeros((D, stack[-1][0].out_channels))
        fc[0, :] = np.concatenate([g.fc_weight[0, :] for g in members])
        groups.append(
            CnnFunction(
                D,
                stack,
                fc,
                sum(g.fc_bias for g in members),
                first_row_only=True,
                input_pair_layer=False,
            )
        )
    return groups


def assemble_resnet(cnns) -> ConvResNetModel:
    """Realize sum_i f_i as a ConvResNet: one residual block per CNN, with two
    accumulator channels carrying the positive/negative parts of the partial
    sum through the identity shortcuts."""
    _check_shared(cnns)
    D = cnns[0].input_dim
    C = 3  # channel 0: padded input, channels 1-2: accumulator pair
    kappa1 = max(g.kappa1 for g in cnns)
    kappa2 = max(g.kappa2 for g in cnns)
    s = min(1.0, kappa1 / kappa2) if (kappa2 > 0 and kappa1 > 0) else 1.0
    blocks = []
    for g in cnns:
        filters = []
        biases = []
        f0, b0 = g.conv_stack[0]
        w = np.zeros((f0.out_channels, f0.width, C))
        w[:, :, 0] = f0.entries[:, :, 0]
        filters.append(FilterTensor(w))
        biases.append(_const_bias(D, b0[0]))
        for f, b in g.conv_stack[1:]:
            filters.append(f)
            biases.append(_const_bias(D, b[0]))
        last_w = g.conv_stack[-1][0].out_channels
        w = np.zeros((C, 1, last_w))
        w[1, 0, :] = s * g.fc_weight[0, :]
        w[2, 0, :] = -s * g.fc_weight[0, :]
        filters.append(FilterTensor(w))
        readout_bias = np.zeros((D, C))
        readout_bias[:, 1] = s * g.fc_bias
        readout_bias[:, 2] = -s * g.fc_bias
        biases.append(readout_bias)
        blocks.append(ResidualBlockSpec(filters, biases))
    fc = np.zeros((D, C))
    fc[0, 1] = 1.0 / s
    fc[0, 2] = -1.0 / s
    return ConvResNetModel(D, C, blocks, fc, 0.0, first_row_only=True)

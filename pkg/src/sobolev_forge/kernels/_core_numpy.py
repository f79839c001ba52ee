"""Pure-numpy forward kernels (fallback backend)."""

import numpy as np


def conv_layer(w, b, z):
    """One-sided stride-one convolution + bias + ReLU over a batch of inputs.

    w: (Cout, K, Cin), b: (D, Cout), z: (n, D, Cin) -> (n, D, Cout).
    Rows past the end of the input read as zero.
    """
    n, D, _ = z.shape
    K = w.shape[1]
    y = np.broadcast_to(b, (n,) + b.shape).copy()
    for k in range(min(K, D)):
        if k == 0:
            y += z @ w[:, 0, :].T
        else:
            y[:, : D - k, :] += z[:, k:, :] @ w[:, k, :].T
    np.maximum(y, 0.0, out=y)
    return y


def mlp_layer(w, b, x, relu=True):
    """Affine layer over a batch: x (n, Cin) -> (n, Cout), optional ReLU."""
    y = x @ w.T + b
    if relu:
        np.maximum(y, 0.0, out=y)
    return y

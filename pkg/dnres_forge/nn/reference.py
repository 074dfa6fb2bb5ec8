"""Direct nested-loop convolutions, the oracle the fast kernels are tested against.

Every output is accumulated in Python float (f64) arithmetic in (c, u, v) order,
so a standard convolution with a block-diagonal kernel reproduces the
depthwise result exactly.
"""
import numpy as np

from dnres_forge.nn.kernels import (
    ConvParams,
    DepthwiseConvParams,
    output_hw,
    pad_zeros,
)
from dnres_forge.nn.tensor import Tensor


def conv2d_forward_reference(x: Tensor, p: ConvParams) -> Tensor:
    n, c, h, w = x.shape
    oh, ow = output_hw(h, w, p.k, p.pad)
    xp = pad_zeros(x, p.pad)
    out = np.zeros((n, p.out_ch, oh, ow), dtype=x.dtype)
    for b in range(n):
        for o in range(p.out_ch):
            for y in range(oh):
                for x_ in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for u in range(p.k):
                            for v in range(p.k):
                                acc += float(p.weights[o, ci, u, v]) * float(
                                    xp[b, ci, y + u, x_ + v]
                                )
                    out[b, o, y, x_] = acc + float(p.bias[o])
    return out


def depthwise_conv2d_forward_reference(x: Tensor, p: DepthwiseConvParams) -> Tensor:
    n, c, h, w = x.shape
    oh, ow = output_hw(h, w, p.k, p.pad)
    xp = pad_zeros(x, p.pad)
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for b in range(n):
        for ci in range(c):
            for y in range(oh):
                for x_ in range(ow):
                    acc = 0.0
                    for u in range(p.k):
                        for v in range(p.k):
                            acc += float(p.weights[ci, 0, u, v]) * float(
                                xp[b, ci, y + u, x_ + v]
                            )
                    out[b, ci, y, x_] = acc + float(p.bias[ci])
    return out


def block_diagonal(p: DepthwiseConvParams) -> ConvParams:
    """The standard convolution equivalent to a depthwise one."""
    weights = np.zeros((p.ch, p.ch, p.k, p.k), dtype=p.weights.dtype)
    for ci in range(p.ch):
        weights[ci, ci] = p.weights[ci, 0]
    return ConvParams(weights, p.bias.copy(), p.pad)

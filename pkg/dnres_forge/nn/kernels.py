"""Forward/backward kernels: standard, depthwise and pointwise convolution, ReLU, add.

The fast path gathers sliding windows with ``sliding_window_view`` (an im2col
without the copy) and reduces them with ``tensordot``/``einsum``.
``dnres_forge.nn.reference`` holds the nested-loop oracle for these kernels.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dnres_forge.errors import ShapeError
from dnres_forge.nn.tensor import AXES, Tensor, check_same_shape, check_tensor


@dataclass
class ConvParams:
    weights: Tensor  # (out_ch, in_ch, k, k)
    bias: np.ndarray  # (out_ch,)
    pad: int = 0
    stride: int = 1

    def __post_init__(self):
        if self.stride != 1:
            raise ValueError(f"All convolutions have stride 1, not {self.stride}")
        if self.weights.ndim != 4:
            raise ShapeError("weight rank", 4, self.weights.ndim, "ConvParams")
        if self.weights.shape[2] != self.weights.shape[3]:
            raise ShapeError(
                "kernel cols", self.weights.shape[2], self.weights.shape[3], "ConvParams"
            )
        if self.k % 2 != 1:
            raise ValueError(f"Kernel size must be odd, not {self.k}")
        if self.bias.shape != (self.out_ch,):
            raise ShapeError("bias length", self.out_ch, self.bias.shape, "ConvParams")
        if self.pad < 0:
            raise ValueError(f"Padding must be >= 0, not {self.pad}")

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[2]


@dataclass
class DepthwiseConvParams:
    weights: Tensor  # (ch, 1, k, k)
    bias: np.ndarray  # (ch,)
    pad: int = 0

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[1] != 1:
            raise ShapeError(
                "weight shape", "(ch, 1, k, k)", self.weights.shape, "DepthwiseConvParams"
            )
        if self.weights.shape[2] != self.weights.shape[3] or self.k % 2 != 1:
            raise ValueError(f"Kernel must be square and odd, not {self.weights.shape}")
        if self.bias.shape != (self.ch,):
            raise ShapeError("bias length", self.ch, self.bias.shape, "DepthwiseConvParams")
        if self.pad < 0:
            raise ValueError(f"Padding must be >= 0, not {self.pad}")

    @property
    def ch(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.weights.shape[2]


def output_hw(h: int, w: int, k: int, pad: int) -> Tuple[int, int]:
    return h + 2 * pad - k + 1, w + 2 * pad - k + 1


def pad_zeros(x: Tensor, pad: int) -> Tensor:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def windows(x: Tensor, k: int, pad: int) -> np.ndarray:
    """Read-only view (n, c, out_h, out_w, k, k) of every k×k window."""
    return sliding_window_view(pad_zeros(x, pad), (k, k), axis=(2, 3))


def _check_input(x: Tensor, channels: int, k: int, pad: int, where: str):
    n, c, h, w = check_tensor(x, where)
    if c != channels:
        raise ShapeError("channels", channels, c, where)
    for axis, size in (("rows", h), ("cols", w)):
        if size + 2 * pad < k:
            raise ShapeError(axis, f">= {k - 2 * pad}", size, where)
    return n, c, h, w


def _check_dtype(x: Tensor, weights: Tensor, where: str):
    if x.dtype != weights.dtype:
        raise TypeError(f"{where}: input is {x.dtype} but weights are {weights.dtype}")


def _check_grad_out(grad_out: Tensor, expected: Tuple[int, ...], where: str):
    check_tensor(grad_out, where)
    for axis, want, got in zip(AXES, expected, grad_out.shape):
        if want != got:
            raise ShapeError(f"grad_out {axis}", want, got, where)


def conv2d_forward(x: Tensor, p: ConvParams) -> Tensor:
    _check_input(x, p.in_ch, p.k, p.pad, "conv2d_forward")
    _check_dtype(x, p.weights, "conv2d_forward")
    cols = windows(x, p.k, p.pad)
    out = np.tensordot(cols, p.weights, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + p.bias[:, None, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv2d_backward(
    grad_out: Tensor, x: Tensor, p: ConvParams, need_input_grad: bool = True
) -> Tuple[Optional[Tensor], Tensor, np.ndarray]:
    n, _, h, w = _check_input(x, p.in_ch, p.k, p.pad, "conv2d_backward")
    _check_grad_out(
        grad_out, (n, p.out_ch, *output_hw(h, w, p.k, p.pad)), "conv2d_backward"
    )

    cols = windows(x, p.k, p.pad)
    grad_weights = np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 2, 3]))
    grad_bias = grad_out.sum(axis=(0, 2, 3))

    grad_input = None
    if need_input_grad:
        # Full correlation of grad_out with the flipped kernel, cropped to the input.
        flipped = p.weights[:, :, ::-1, ::-1]
        gcols = windows(grad_out, p.k, p.k - 1)
        grad_padded = np.tensordot(gcols, flipped, axes=([1, 4, 5], [0, 2, 3]))
        grad_input = np.ascontiguousarray(
            grad_padded.transpose(0, 3, 1, 2)[:, :, p.pad : p.pad + h, p.pad : p.pad + w],
            dtype=x.dtype,
        )

    return grad_input, grad_weights.astype(x.dtype), grad_bias.astype(x.dtype)


def depthwise_conv2d_forward(x: Tensor, p: DepthwiseConvParams) -> Tensor:
    _check_input(x, p.ch, p.k, p.pad, "depthwise_conv2d_forward")
    _check_dtype(x, p.weights, "depthwise_conv2d_forward")
    cols = windows(x, p.k, p.pad)
    out = np.einsum("ncyxuv,cuv->ncyx", cols, p.weights[:, 0])
    out += p.bias[:, None, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def depthwise_conv2d_backward(
    grad_out: Tensor, x: Tensor, p: DepthwiseConvParams, need_input_grad: bool = True
) -> Tuple[Optional[Tensor], Tensor, np.ndarray]:
    n, _, h, w = _check_input(x, p.ch, p.k, p.pad, "depthwise_conv2d_backward")
    _check_grad_out(
        grad_out, (n, p.ch, *output_hw(h, w, p.k, p.pad)), "depthwise_conv2d_backward"
    )

    cols = windows(x, p.k, p.pad)
    grad_weights = np.einsum("ncyx,ncyxuv->cuv", grad_out, cols)[:, np.newaxis]
    grad_bias = grad_out.sum(axis=(0, 2, 3))

    grad_input = None
    if need_input_grad:
        flipped = p.weights[:, 0, ::-1, ::-1]
        gcols = windows(grad_out, p.k, p.k - 1)
        grad_padded = np.einsum("ncyxuv,cuv->ncyx", gcols, flipped)
        grad_input = np.ascontiguousarray(
            grad_padded[:, :, p.pad : p.pad + h, p.pad : p.pad + w], dtype=x.dtype
        )

    return grad_input, grad_weights.astype(x.dtype), grad_bias.astype(x.dtype)


def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    check_same_shape(grad_out, x, "relu_backward")
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype)


def add(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b, "add")
    return a + b


def add_backward(grad_out: Tensor) -> Tuple[Tensor, Tensor]:
    # The sum routes its upstream gradient unchanged to both operands.
    return grad_out, grad_out

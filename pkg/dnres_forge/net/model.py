"""Forward and backward execution of a NetworkTopology."""
from typing import Dict, List, Optional, Tuple

import numpy as np

from dnres_forge.errors import ShapeError
from dnres_forge.net.topology import LayerKind, LayerNode, NetworkTopology
from dnres_forge.nn.kernels import (
    ConvParams,
    DepthwiseConvParams,
    add,
    add_backward,
    conv2d_backward,
    conv2d_forward,
    depthwise_conv2d_backward,
    depthwise_conv2d_forward,
    relu_backward,
    relu_forward,
)
from dnres_forge.nn.tensor import Tensor, check_tensor

TapeEntry = Tuple[LayerNode, Dict[str, Tensor]]
Tape = List[TapeEntry]


def _conv(net: NetworkTopology, prefix: str, pad: int) -> ConvParams:
    return ConvParams(net.params[f"{prefix}.weight"], net.params[f"{prefix}.bias"], pad)


def _depthwise(net: NetworkTopology, prefix: str, pad: int) -> DepthwiseConvParams:
    return DepthwiseConvParams(
        net.params[f"{prefix}.weight"], net.params[f"{prefix}.bias"], pad
    )


def _forward_node(
    net: NetworkTopology, node: LayerNode, x: Tensor
) -> Tuple[Tensor, Dict[str, Tensor]]:
    if node.kind is LayerKind.CONV:
        return conv2d_forward(x, _conv(net, node.name, node.pad)), {"x": x}
    if node.kind is LayerKind.DEPTHWISE_CONV:
        return depthwise_conv2d_forward(x, _depthwise(net, node.name, node.pad)), {"x": x}
    if node.kind is LayerKind.RELU:
        return relu_forward(x), {"x": x}
    if node.kind is LayerKind.RESBLOCK:
        h1 = conv2d_forward(x, _conv(net, f"{node.name}.conv1", 1))
        a1 = relu_forward(h1)
        h2 = conv2d_forward(a1, _conv(net, f"{node.name}.conv2", 1))
        # No ReLU after the addition.
        return add(x, h2), {"x": x, "h1": h1, "a1": a1}
    if node.kind is LayerKind.DS_RESBLOCK:
        h1 = depthwise_conv2d_forward(x, _depthwise(net, f"{node.name}.depthwise", 1))
        a1 = relu_forward(h1)
        h2 = conv2d_forward(a1, _conv(net, f"{node.name}.pointwise", 0))
        a2 = relu_forward(h2)
        return add(x, a2), {"x": x, "h1": h1, "a1": a1, "h2": h2}
    raise ValueError(f"Unknown layer kind {node.kind}")


def _backward_node(
    net: NetworkTopology,
    node: LayerNode,
    saved: Dict[str, Tensor],
    grad_out: Tensor,
    grads: Dict[str, np.ndarray],
    need_input_grad: bool,
) -> Optional[Tensor]:
    x = saved["x"]
    if node.kind is LayerKind.CONV:
        gx, gw, gb = conv2d_backward(
            grad_out, x, _conv(net, node.name, node.pad), need_input_grad
        )
        grads[f"{node.name}.weight"], grads[f"{node.name}.bias"] = gw, gb
        return gx
    if node.kind is LayerKind.DEPTHWISE_CONV:
        gx, gw, gb = depthwise_conv2d_backward(
            grad_out, x, _depthwise(net, node.name, node.pad), need_input_grad
        )
        grads[f"{node.name}.weight"], grads[f"{node.name}.bias"] = gw, gb
        return gx
    if node.kind is LayerKind.RELU:
        return relu_backward(grad_out, x)

    g_skip, g_branch = add_backward(grad_out)
    if node.kind is LayerKind.RESBLOCK:
        conv1, conv2 = f"{node.name}.conv1", f"{node.name}.conv2"
        g_a1, gw, gb = conv2d_backward(g_branch, saved["a1"], _conv(net, conv2, 1))
        grads[f"{conv2}.weight"], grads[f"{conv2}.bias"] = gw, gb
        g_h1 = relu_backward(g_a1, saved["h1"])
        g_x, gw, gb = conv2d_backward(g_h1, x, _conv(net, conv1, 1))
        grads[f"{conv1}.weight"], grads[f"{conv1}.bias"] = gw, gb
        return g_skip + g_x
    if node.kind is LayerKind.DS_RESBLOCK:
        dw, pw = f"{node.name}.depthwise", f"{node.name}.pointwise"
        g_h2 = relu_backward(g_branch, saved["h2"])
        g_a1, gw, gb = conv2d_backward(g_h2, saved["a1"], _conv(net, pw, 0))
        grads[f"{pw}.weight"], grads[f"{pw}.bias"] = gw, gb
        g_h1 = relu_backward(g_a1, saved["h1"])
        g_x, gw, gb = depthwise_conv2d_backward(g_h1, x, _depthwise(net, dw, 1))
        grads[f"{dw}.weight"], grads[f"{dw}.bias"] = gw, gb
        return g_skip + g_x
    raise ValueError(f"Unknown layer kind {node.kind}")


def forward(net: NetworkTopology, x: Tensor) -> Tuple[Tensor, Tape]:
    _, c, _, _ = check_tensor(x, "forward")
    if c != net.layers[0].in_ch:
        raise ShapeError("channels", net.layers[0].in_ch, c, "forward")
    tape: Tape = []
    for node in net.layers:
        x, saved = _forward_node(net, node, x)
        tape.append((node, saved))
    return x, tape


def backward(
    net: NetworkTopology,
    tape: Tape,
    grad_out: Tensor,
    need_input_grad: bool = False,
) -> Tuple[Optional[Tensor], Dict[str, np.ndarray]]:
    grads: Dict[str, np.ndarray] = {}
    g: Optional[Tensor] = grad_out
    for i in range(len(tape) - 1, -1, -1):
        node, saved = tape[i]
        g = _backward_node(net, node, saved, g, grads, need_input_grad or i > 0)
    return g, grads


def predict(net: NetworkTopology, x: Tensor) -> Tensor:
    """Forward pass in the network's dtype, discarding the tape."""
    out, _ = forward(net, np.asarray(x, dtype=net.dtype.numpy))
    return out


def relu_inputs(tape: Tape) -> List[Tensor]:
    """Every ReLU pre-activation recorded on the tape."""
    arrays = []
    for node, saved in tape:
        if node.kind is LayerKind.RELU:
            arrays.append(saved["x"])
        elif node.kind is LayerKind.RESBLOCK:
            arrays.append(saved["h1"])
        elif node.kind is LayerKind.DS_RESBLOCK:
            arrays.extend((saved["h1"], saved["h2"]))
    return arrays


class NetworkFragment:
    """Adapter exposing a whole network to ``gradient_check``."""

    def __init__(self, net: NetworkTopology):
        self.net = net
        self.params = net.params

    def forward(self, x: Tensor):
        return forward(self.net, x)

    def backward(self, tape: Tape, grad_out: Tensor):
        return backward(self.net, tape, grad_out, need_input_grad=True)

    @staticmethod
    def relu_inputs(tape: Tape) -> List[Tensor]:
        return relu_inputs(tape)

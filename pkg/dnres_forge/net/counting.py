"""Parameter and multiply-accumulate accounting."""
from enum import Enum
from typing import Tuple

import numpy as np

from dnres_forge.errors import ShapeError
from dnres_forge.net.topology import LayerKind, LayerNode, NetworkTopology


class CountMode(Enum):
    WEIGHTS_ONLY = "weights_only"  # published tables exclude biases
    WITH_BIAS = "with_bias"


class MacMode(Enum):
    # Every layer evaluated at the full input area, as in "640×480×3×3×32×32×2".
    FULL_AREA = "full-area"
    # True output dims of the unpadded forward pass (valid c1/c2/c_out).
    EXACT = "exact"


def count_params(net: NetworkTopology, mode: CountMode = CountMode.WEIGHTS_ONLY) -> int:
    return sum(
        int(np.prod(shape))
        for name, shape in net.param_specs()
        if mode is CountMode.WITH_BIAS or name.endswith(".weight")
    )


def _node_macs(node: LayerNode, h: int, w: int, mode: MacMode) -> Tuple[int, int, int]:
    """MACs of one node and the spatial size it hands to the next."""
    if node.kind is LayerKind.RELU:
        return 0, h, w
    if mode is MacMode.EXACT:
        oh, ow = h + 2 * node.pad - node.k + 1, w + 2 * node.pad - node.k + 1
        if oh < 1 or ow < 1:
            raise ShapeError("input size", f">= {node.k - 2 * node.pad}", (h, w), node.name)
    else:
        oh, ow = h, w
    area = oh * ow
    c = node.in_ch
    if node.kind is LayerKind.CONV:
        macs = area * node.k * node.k * node.in_ch * node.out_ch
    elif node.kind is LayerKind.DEPTHWISE_CONV:
        macs = area * node.k * node.k * c
    elif node.kind is LayerKind.RESBLOCK:
        macs = 2 * area * 3 * 3 * c * c
    elif node.kind is LayerKind.DS_RESBLOCK:
        macs = area * 3 * 3 * c + area * c * c
    else:
        raise ValueError(f"Unknown layer kind {node.kind}")
    return macs, oh, ow


def count_macs(
    net: NetworkTopology, input_h: int, input_w: int, mode: MacMode = MacMode.FULL_AREA
) -> int:
    total = 0
    h, w = input_h, input_w
    for node in net.layers:
        macs, h, w = _node_macs(node, h, w, mode)
        total += macs
    return total


def node_macs(
    node: LayerNode, input_h: int, input_w: int, mode: MacMode = MacMode.FULL_AREA
) -> int:
    return _node_macs(node, input_h, input_w, mode)[0]

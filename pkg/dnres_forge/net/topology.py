"""DN-ResNet / DS-DN-ResNet topologies and the structural mutations of training.

A topology's layer structure and provenance never change after construction;
``insert_resblock``, ``insert_ds_resblock`` and ``evolve_block_to_ds`` return new
topologies whose parameter arrays are copies of the inherited ones. The trainer
updates the parameter arrays of the topology it owns in place.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from dnres_forge.errors import TopologyError
from dnres_forge.nn.tensor import DEFAULT_DTYPE, DType

# "randomly initialized from a Gaussian distribution with σ = 0.001"
INIT_STD = 1e-3
BLOCK_CHANNELS = 32


class LayerKind(Enum):
    CONV = "conv"
    DEPTHWISE_CONV = "depthwise_conv"
    RELU = "relu"
    RESBLOCK = "resblock"
    DS_RESBLOCK = "ds_resblock"


BLOCK_KINDS = (LayerKind.RESBLOCK, LayerKind.DS_RESBLOCK)
BLOCK_PREFIX = {LayerKind.RESBLOCK: "rb", LayerKind.DS_RESBLOCK: "dsrb"}


@dataclass(frozen=True)
class LayerNode:
    kind: LayerKind
    name: str
    in_ch: int = 0
    out_ch: int = 0
    k: int = 0
    pad: int = 0

    @property
    def is_block(self) -> bool:
        return self.kind in BLOCK_KINDS

    @property
    def ordinal(self) -> int:
        """Block number k of "rb{k}" / "dsrb{k}"."""
        return int(self.name[len(BLOCK_PREFIX[self.kind]) :])

    def param_specs(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """(name, shape) of every parameter, in declaration order."""
        c = self.in_ch
        if self.kind is LayerKind.CONV:
            return [
                (f"{self.name}.weight", (self.out_ch, self.in_ch, self.k, self.k)),
                (f"{self.name}.bias", (self.out_ch,)),
            ]
        if self.kind is LayerKind.DEPTHWISE_CONV:
            return [
                (f"{self.name}.weight", (c, 1, self.k, self.k)),
                (f"{self.name}.bias", (c,)),
            ]
        if self.kind is LayerKind.RESBLOCK:
            return [
                (f"{self.name}.conv1.weight", (c, c, 3, 3)),
                (f"{self.name}.conv1.bias", (c,)),
                (f"{self.name}.conv2.weight", (c, c, 3, 3)),
                (f"{self.name}.conv2.bias", (c,)),
            ]
        if self.kind is LayerKind.DS_RESBLOCK:
            return [
                (f"{self.name}.depthwise.weight", (c, 1, 3, 3)),
                (f"{self.name}.depthwise.bias", (c,)),
                (f"{self.name}.pointwise.weight", (c, c, 1, 1)),
                (f"{self.name}.pointwise.bias", (c,)),
            ]
        return []

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "k": self.k,
            "pad": self.pad,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerNode":
        return cls(
            LayerKind(d["kind"]),
            d["name"],
            d["in_ch"],
            d["out_ch"],
            d["k"],
            d["pad"],
        )


def conv(name: str, in_ch: int, out_ch: int, k: int, pad: int = 0) -> LayerNode:
    return LayerNode(LayerKind.CONV, name, in_ch, out_ch, k, pad)


def relu(name: str) -> LayerNode:
    return LayerNode(LayerKind.RELU, name)


def block(kind: LayerKind, ordinal: int, channels: int = BLOCK_CHANNELS) -> LayerNode:
    # SAME padding: "zero pad 2 pixels in each new 3×3 layer", one per side.
    return LayerNode(kind, f"{BLOCK_PREFIX[kind]}{ordinal}", channels, channels, 3, 1)


@dataclass(frozen=True)
class ProvenanceEntry:
    stage: int
    action: str  # "built", "inserted" or "replaced"
    node: str
    replaced: Optional[str] = None

    def __str__(self):
        if self.replaced:
            return f"stage {self.stage}: {self.action} {self.replaced} -> {self.node}"
        return f"stage {self.stage}: {self.action} {self.node}"


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    layers: Tuple[LayerNode, ...]
    params: Dict[str, np.ndarray] = field(repr=False)
    provenance: Tuple[ProvenanceEntry, ...] = ()

    @property
    def blocks(self) -> List[LayerNode]:
        return [node for node in self.layers if node.is_block]

    @property
    def stage_count(self) -> int:
        return len(self.blocks)

    @property
    def conv_layer_count(self) -> int:
        """Convolutional depth, counting each block as two layers."""
        return 3 + 2 * self.stage_count

    @property
    def dtype(self) -> DType:
        return DType.of(next(iter(self.params.values())))

    def param_specs(self) -> Iterator[Tuple[str, Tuple[int, ...]]]:
        for node in self.layers:
            yield from node.param_specs()

    def param_names(self) -> List[str]:
        return [name for name, _ in self.param_specs()]

    def same_structure(self, other: "NetworkTopology") -> bool:
        return self.layers == other.layers and self.provenance == other.provenance

    def same_weights(self, other: "NetworkTopology") -> bool:
        if self.param_names() != other.param_names():
            return False
        return all(
            self.params[name].dtype == other.params[name].dtype
            and np.array_equal(self.params[name], other.params[name])
            for name in self.param_names()
        )

    def copy(self) -> "NetworkTopology":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype: DType) -> "NetworkTopology":
        return replace(
            self, params={k: v.astype(dtype.numpy) for k, v in self.params.items()}
        )


def _init_params(
    node: LayerNode,
    rng: Optional[np.random.Generator],
    std: float,
    dtype: DType,
) -> Dict[str, np.ndarray]:
    params = {}
    for name, shape in node.param_specs():
        if name.endswith(".weight") and std > 0:
            if rng is None:
                raise ValueError("An rng is required for Gaussian initialization")
            params[name] = rng.normal(0.0, std, size=shape).astype(dtype.numpy)
        else:
            params[name] = np.zeros(shape, dtype=dtype.numpy)
    return params


def build_base(
    rng: Optional[np.random.Generator] = None,
    std: float = INIT_STD,
    dtype: DType = DEFAULT_DTYPE,
) -> NetworkTopology:
    """The 3-layer starting point of cascade training: 64 9×9, 32 5×5, one 5×5."""
    layers = (
        conv("c1", 1, 64, 9),
        relu("relu1"),
        conv("c2", 64, BLOCK_CHANNELS, 5),
        relu("relu2"),
        conv("c_out", BLOCK_CHANNELS, 1, 5),
    )
    params: Dict[str, np.ndarray] = {}
    for node in layers:
        params.update(_init_params(node, rng, std, dtype))
    return NetworkTopology(layers, params, (ProvenanceEntry(0, "built", "base"),))


def _require_base_skeleton(net: NetworkTopology):
    names = [node.name for node in net.layers]
    if names[:4] != ["c1", "relu1", "c2", "relu2"] or names[-1] != "c_out":
        raise TopologyError(f"Not a DN-ResNet skeleton: {names}")


def _insert(
    net: NetworkTopology,
    kind: LayerKind,
    rng: Optional[np.random.Generator],
    std: float,
) -> NetworkTopology:
    _require_base_skeleton(net)
    node = block(kind, net.stage_count + 1)
    params = {k: v.copy() for k, v in net.params.items()}
    params.update(_init_params(node, rng, std, net.dtype))
    # "inserted just before the last 5×5 layer"
    layers = net.layers[:-1] + (node,) + net.layers[-1:]
    entry = ProvenanceEntry(len(net.provenance), "inserted", node.name)
    return NetworkTopology(layers, params, net.provenance + (entry,))


def insert_resblock(
    net: NetworkTopology,
    rng: Optional[np.random.Generator] = None,
    std: float = INIT_STD,
) -> NetworkTopology:
    return _insert(net, LayerKind.RESBLOCK, rng, std)


def insert_ds_resblock(
    net: NetworkTopology,
    rng: Optional[np.random.Generator] = None,
    std: float = INIT_STD,
) -> NetworkTopology:
    return _insert(net, LayerKind.DS_RESBLOCK, rng, std)


def evolve_block_to_ds(
    net: NetworkTopology,
    index_from_tail: int,
    rng: Optional[np.random.Generator] = None,
    std: float = INIT_STD,
) -> NetworkTopology:
    """Replace one ResBlock by a freshly initialized DS-ResBlock.

    ``index_from_tail`` 0 addresses the block closest to the output layer.
    c1, c2 and c_out are never replaced.
    """
    _require_base_skeleton(net)
    blocks = net.blocks
    if not 0 <= index_from_tail < len(blocks):
        raise TopologyError(
            f"Block index {index_from_tail} from tail is out of range for "
            f"{len(blocks)} blocks"
        )
    old = blocks[len(blocks) - 1 - index_from_tail]
    if old.kind is not LayerKind.RESBLOCK:
        raise TopologyError(f"{old.name} is a {old.kind.value}, not a resblock")

    new = block(LayerKind.DS_RESBLOCK, old.ordinal, old.in_ch)
    dropped = {name for name, _ in old.param_specs()}
    params = {k: v.copy() for k, v in net.params.items() if k not in dropped}
    params.update(_init_params(new, rng, std, net.dtype))
    layers = tuple(new if node is old else node for node in net.layers)
    entry = ProvenanceEntry(len(net.provenance), "replaced", new.name, old.name)
    return NetworkTopology(layers, params, net.provenance + (entry,))


def identity_network(net: NetworkTopology) -> NetworkTopology:
    """Same structure, weights set so that the output is the centered crop of a
    nonnegative input: center deltas on channel 0 of c1/c2/c_out, zero blocks."""
    params = {k: np.zeros_like(v) for k, v in net.params.items()}
    for node in net.layers:
        if node.kind is LayerKind.CONV:
            center = node.k // 2
            params[f"{node.name}.weight"][0, 0, center, center] = 1
    return replace(net, params=params)


def describe(net: NetworkTopology) -> str:
    """Human-readable layer table."""
    rows = [f"{'name':<8} {'kind':<15} {'shape':<22} params"]
    for node in net.layers:
        if node.kind is LayerKind.RELU:
            shape = ""
        elif node.is_block:
            shape = f"{node.in_ch}ch 3x3 pad{node.pad}"
        else:
            shape = f"{node.in_ch}->{node.out_ch} {node.k}x{node.k} pad{node.pad}"
        count = sum(int(np.prod(s)) for _, s in node.param_specs())
        rows.append(f"{node.name:<8} {node.kind.value:<15} {shape:<22} {count}")
    rows.extend(str(entry) for entry in net.provenance)
    return "\n".join(rows)

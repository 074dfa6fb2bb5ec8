"""Parameter and MAC accounting of a network, against the published tables."""
import logging
import sys
from argparse import Namespace

from dnres_forge.checkpoint import load_checkpoint
from dnres_forge.data import (
    DN_RESNET_13_MACS_BILLIONS,
    DN_RESNET_PARAMS,
    DS_DN_RESNET_13_MACS_BILLIONS,
    DS_DN_RESNET_13_PARAMS_PUBLISHED,
    REFERENCE_SIZE,
)
from dnres_forge.net.counting import CountMode, MacMode, count_macs, count_params, node_macs
from dnres_forge.net.topology import (
    LayerKind,
    NetworkTopology,
    build_base,
    describe,
    insert_ds_resblock,
    insert_resblock,
)
from dnres_forge.utility import EXIT_OK, Args, get_args, guarded

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.CHECKPOINT_OPTIONAL,
    Args.BLOCKS,
    Args.BLOCK_KIND,
    Args.SIZE,
    Args.MAC_MODE,
)


def build_network(blocks: int, kind: LayerKind) -> NetworkTopology:
    """Zero-weight network of the given depth; only its structure matters here."""
    net = build_base(std=0.0)
    insert = insert_ds_resblock if kind is LayerKind.DS_RESBLOCK else insert_resblock
    for _ in range(blocks):
        net = insert(net, std=0.0)
    return net


def published_notes(net: NetworkTopology, size, mode: MacMode):
    kinds = {b.kind for b in net.blocks}
    depth = net.conv_layer_count
    at_reference = tuple(size) == REFERENCE_SIZE and mode is MacMode.FULL_AREA
    if kinds <= {LayerKind.RESBLOCK}:
        if depth in DN_RESNET_PARAMS:
            yield f"published parameters for {depth} layers: {DN_RESNET_PARAMS[depth]:,}"
        if depth == 13 and at_reference:
            yield f"published MACs: {DN_RESNET_13_MACS_BILLIONS} B"
    elif kinds == {LayerKind.DS_RESBLOCK} and depth == 13:
        yield (
            f"published parameters: {DS_DN_RESNET_13_PARAMS_PUBLISHED:,} "
            f"(the layers listed add up to {count_params(net):,})"
        )
        if at_reference:
            yield f"published MACs: {DS_DN_RESNET_13_MACS_BILLIONS} B"


@guarded
def main(args: Namespace) -> int:
    if args.checkpoint is not None:
        net = load_checkpoint(args.checkpoint)
    else:
        net = build_network(args.blocks, args.block_kind)
    height, width = args.size

    logger.info(describe(net))
    logger.info(f"Parameters (weights only): {count_params(net, CountMode.WEIGHTS_ONLY):,}")
    logger.info(f"Parameters (with biases): {count_params(net, CountMode.WITH_BIAS):,}")
    macs = count_macs(net, height, width, args.mac_mode)
    logger.info(
        f"MACs at {width}x{height} ({args.mac_mode.value}): {macs:,} ({macs / 1e9:.1f} B)"
    )
    for block in net.blocks[:1]:
        per_block = node_macs(block, height, width, MacMode.FULL_AREA)
        logger.info(f"MACs per {block.kind.value} at {width}x{height}: {per_block:,}")
    for note in published_notes(net, args.size, args.mac_mode):
        logger.info(f"Note: {note}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))

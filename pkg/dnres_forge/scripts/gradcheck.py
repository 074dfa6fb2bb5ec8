"""Finite-difference check of every layer type and of a whole network."""
import logging
import sys
from argparse import Namespace
from typing import Iterator, Tuple

import numpy as np

from dnres_forge.checkpoint import load_checkpoint
from dnres_forge.net.model import NetworkFragment
from dnres_forge.net.topology import (
    LayerKind,
    NetworkTopology,
    build_base,
    insert_ds_resblock,
    insert_resblock,
)
from dnres_forge.noise import RngStream
from dnres_forge.nn.gradcheck import (
    AddFragment,
    ConvFragment,
    DepthwiseFragment,
    Fragment,
    ReluFragment,
    gradient_check,
)
from dnres_forge.nn.kernels import ConvParams, DepthwiseConvParams
from dnres_forge.nn.tensor import CHECK_DTYPE
from dnres_forge.utility import EXIT_FAILURE, EXIT_OK, Args, get_args, guarded

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.SEED,
    Args.CHECKPOINT_OPTIONAL,
    Args.BLOCKS,
    Args.BLOCK_KIND,
    Args.TOLERANCE,
    Args.SAMPLES,
)

# Weight std of networks built for checking, 100 times the training init.
CHECK_STD = 0.1
INPUT_SIDE = 21
SAMPLES_PER_PARAM = 16


def fresh_network(blocks: int, kind: LayerKind, rng: np.random.Generator) -> NetworkTopology:
    net = build_base(rng, CHECK_STD, CHECK_DTYPE)
    insert = insert_ds_resblock if kind is LayerKind.DS_RESBLOCK else insert_resblock
    for _ in range(blocks):
        net = insert(net, rng, CHECK_STD)
    return net


def layer_fragments(rng: np.random.Generator) -> Iterator[Tuple[str, Fragment, np.ndarray]]:
    """One small instance of each layer type with a matching input."""
    x = rng.standard_normal((2, 3, 7, 7))
    yield "conv 3x3", ConvFragment(
        ConvParams(rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4), pad=1)
    ), x
    yield "conv 5x5 valid", ConvFragment(
        ConvParams(rng.standard_normal((2, 3, 5, 5)), rng.standard_normal(2))
    ), x
    yield "depthwise 3x3", DepthwiseFragment(
        DepthwiseConvParams(rng.standard_normal((3, 1, 3, 3)), rng.standard_normal(3), pad=1)
    ), x
    yield "relu", ReluFragment(), x
    yield "add", AddFragment(rng.standard_normal(x.shape)), x


@guarded
def main(args: Namespace) -> int:
    rng = RngStream(args.seed).generator()
    passed = True

    for name, fragment, x in layer_fragments(rng):
        report = gradient_check(fragment, x, args.tolerance, rng=rng)
        logger.info(f"{name}: {report.lines()[-1]}")
        passed = passed and report.passed

    if args.checkpoint is not None:
        net = load_checkpoint(args.checkpoint).astype(CHECK_DTYPE)
    else:
        net = fresh_network(args.blocks, args.block_kind, rng)
    x = rng.uniform(0.0, 1.0, size=(1, 1, INPUT_SIDE, INPUT_SIDE))
    report = gradient_check(
        NetworkFragment(net),
        x,
        args.tolerance,
        samples_per_param=args.samples or SAMPLES_PER_PARAM,
        rng=rng,
    )
    for line in report.lines():
        logger.info(f"{net.conv_layer_count}-layer network {line}")
    passed = passed and report.passed

    return EXIT_OK if passed else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))

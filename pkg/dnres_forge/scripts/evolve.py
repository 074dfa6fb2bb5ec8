"""Evolve a trained DN-ResNet into a DS-DN-ResNet, tail block first."""
import logging
import sys
from argparse import Namespace

from dnres_forge.checkpoint import read_checkpoint, save_checkpoint
from dnres_forge.data import DS_DN_RESNET_13_PARAMS, DS_DN_RESNET_13_PARAMS_PUBLISHED
from dnres_forge.net.counting import count_params
from dnres_forge.net.topology import LayerKind
from dnres_forge.scripts.train import (
    HISTORY_NAME,
    report_params,
    stage_writer,
    training_config,
    training_pairs,
)
from dnres_forge.training.evolution import EvolutionPlan, run_evolution
from dnres_forge.utility import EXIT_OK, Args, get_args, guarded, log_to_file, write_config

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.SEED,
    Args.CHECKPOINT,
    Args.MANIFEST,
    Args.OUT_DIR,
    Args.DEGRADED_DIR,
    Args.NOISE,
    Args.FINE_TUNE_EPOCHS,
    Args.ONE_SHOT,
    Args.LOSS,
    Args.W,
    Args.THRESHOLD,
    Args.BATCH_SIZE,
    Args.OPTIMIZER,
    Args.LEARNING_RATE,
    Args.STRIDE,
    Args.JITTER,
)

EVOLVED_NAME = "evolved.dnres"


@guarded
def main(args: Namespace) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    handler = log_to_file(args.out_dir)
    try:
        write_config(args, args.out_dir)
        source = read_checkpoint(args.checkpoint)
        net = source.topology
        models = [] if args.degraded_dir is not None else args.noise
        plan = EvolutionPlan(args.fine_tune_epochs, args.one_shot, training_config(args))
        metadata = {
            **source.metadata,
            "seed": args.seed,
            "evolved_from": args.checkpoint.name,
            "one_shot": args.one_shot,
        }

        pairs = training_pairs(args, models)
        evolved, history = run_evolution(
            net, plan, pairs, args.seed, stage_writer(args.out_dir, metadata)
        )
        save_checkpoint(evolved, args.out_dir / EVOLVED_NAME, metadata)
        logger.info(f"{len(history)} evolution stages written to {args.out_dir / HISTORY_NAME}")

        report_params(evolved)
        weights = count_params(evolved)
        if weights == DS_DN_RESNET_13_PARAMS and all(
            b.kind is LayerKind.DS_RESBLOCK for b in evolved.blocks
        ):
            logger.info(
                f"Note: the published DS-DN-ResNet count is {DS_DN_RESNET_13_PARAMS_PUBLISHED:,}, "
                f"{weights - DS_DN_RESNET_13_PARAMS_PUBLISHED} fewer than the topology adds up to"
            )
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))

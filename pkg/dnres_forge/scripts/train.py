"""Cascade-train DN-ResNets on a manifest's training split."""
import logging
import sys
from argparse import Namespace
from pathlib import Path
from typing import List, Sequence

from dnres_forge.checkpoint import save_checkpoint
from dnres_forge.data import DN_RESNET_PARAMS
from dnres_forge.losses import loss_spec
from dnres_forge.net.counting import CountMode, count_params
from dnres_forge.net.topology import LayerKind, NetworkTopology
from dnres_forge.noise import NoiseModel
from dnres_forge.nn.optim import OptimizerState
from dnres_forge.patches import DatasetManifest, PatchPair, load_patch_pairs, read_manifest
from dnres_forge.training.cascade import CascadePlan, run_cascade
from dnres_forge.training.common import StageCallback, StageRecord, TrainingConfig
from dnres_forge.utility import (
    EXIT_OK,
    Args,
    get_args,
    guarded,
    log_to_file,
    slug,
    write_config,
)

logger = logging.getLogger(__name__)

ARGS = (
    Args.CONFIG,
    Args.SEED,
    Args.MANIFEST,
    Args.OUT_DIR,
    Args.DEGRADED_DIR,
    Args.NOISE,
    Args.BLIND,
    Args.BLOCKS,
    Args.BLOCK_KIND,
    Args.ONE_SHOT,
    Args.LOSS,
    Args.W,
    Args.THRESHOLD,
    Args.EPOCH_CAP,
    Args.BATCH_SIZE,
    Args.OPTIMIZER,
    Args.LEARNING_RATE,
    Args.STRIDE,
    Args.JITTER,
)

HISTORY_NAME = "history.jsonl"
FINAL_NAME = "final.dnres"


def training_config(args: Namespace) -> TrainingConfig:
    return TrainingConfig(
        OptimizerState(args.optimizer, args.learning_rate),
        loss_spec(args.loss, args.w, args.threshold),
        args.batch_size,
    )


def training_pairs(args: Namespace, models: Sequence[NoiseModel]) -> List[PatchPair]:
    manifest = DatasetManifest(
        read_manifest(args.manifest), list(models), args.degraded_dir, args.seed
    )
    pairs = load_patch_pairs(manifest, stride=args.stride, jitter=args.jitter)
    if not pairs:
        raise ValueError(f"No training patches in {args.manifest}")
    return pairs


def report_params(net: NetworkTopology):
    weights = count_params(net, CountMode.WEIGHTS_ONLY)
    with_bias = count_params(net, CountMode.WITH_BIAS)
    logger.info(
        f"{net.conv_layer_count} layers: {weights:,} parameters (weights only), "
        f"{with_bias:,} with biases"
    )
    published = DN_RESNET_PARAMS.get(net.conv_layer_count)
    if published is not None and all(b.kind is LayerKind.RESBLOCK for b in net.blocks):
        logger.info(f"Published count for {net.conv_layer_count} layers: {published:,}")


def stage_writer(out_dir: Path, metadata: dict) -> StageCallback:
    """Checkpoint every finished stage and append it to the history file."""
    history = out_dir / HISTORY_NAME
    history.write_text("", encoding="utf-8")

    def on_stage(net: NetworkTopology, record: StageRecord):
        name = f"stage{record.stage}.dnres"
        save_checkpoint(net, out_dir / name, {**metadata, "stage": record.stage})
        record.checkpoint = name
        with open(history, "a", encoding="utf-8") as file:
            file.write(record.to_json() + "\n")

    return on_stage


def train_one(args: Namespace, models: Sequence[NoiseModel], out_dir: Path) -> NetworkTopology:
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = CascadePlan(
        max_blocks=args.blocks,
        epoch_cap=args.epoch_cap,
        training=training_config(args),
        blind=len(models) > 1,
        models=list(models),
        block_kind=args.block_kind,
        one_shot=args.one_shot,
    )
    labels = [model.label for model in models]
    logger.info(f"Training on {', '.join(labels) or 'external degradations'} into {out_dir}")
    metadata = {"seed": args.seed, "noise": labels, "loss": args.loss.value}

    pairs = training_pairs(args, models)
    net, history = run_cascade(plan, pairs, args.seed, stage_writer(out_dir, metadata))
    save_checkpoint(net, out_dir / FINAL_NAME, {**metadata, "stages": len(history)})
    report_params(net)
    return net


@guarded
def main(args: Namespace) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    handler = log_to_file(args.out_dir)
    try:
        write_config(args, args.out_dir)
        if args.degraded_dir is not None:
            train_one(args, [], args.out_dir)
        elif args.blind or len(args.noise) == 1:
            train_one(args, args.noise, args.out_dir)
        else:
            for model in args.noise:
                train_one(args, [model], args.out_dir / slug(model.label))
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(get_args(*ARGS)))

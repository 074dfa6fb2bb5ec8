"""Pieces shared by cascade training and incremental evolution."""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from dnres_forge.checkpoint.common import Checkpoint
from dnres_forge.checkpoint.encoder import CheckpointEncoder
from dnres_forge.errors import DivergenceError
from dnres_forge.losses import EdgeMapSpec, compute_loss
from dnres_forge.net.model import backward, forward
from dnres_forge.net.topology import NetworkTopology
from dnres_forge.nn.optim import OptimizerState, optimizer_step
from dnres_forge.nn.tensor import Tensor
from dnres_forge.patches import DEFAULT_BATCH_SIZE, PatchPair, batch_iterator

logger = logging.getLogger(__name__)

# Substream tags under the run seed.
INIT_STREAM = 10
EPOCH_STREAM = 11


class Transition(Enum):
    LOSS_THRESHOLD_MET = "loss_threshold_met"
    EPOCH_CAP = "epoch_cap"
    MANUAL = "manual"
    PLATEAU = "plateau"  # stage-0 and one-shot stopping rule
    SCHEDULE = "schedule"  # fixed fine-tuning budget of an evolution stage


@dataclass
class StageRecord:
    stage: int
    topology_id: str
    epochs: int
    final_loss: float
    reason: Transition
    epoch_losses: List[float] = field(default_factory=list)
    checkpoint: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "stage": self.stage,
                "topology": self.topology_id,
                "epochs": self.epochs,
                "loss": self.final_loss,
                "reason": self.reason.value,
                "epoch_losses": self.epoch_losses,
                "checkpoint": self.checkpoint,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "StageRecord":
        d = json.loads(line)
        return cls(
            d["stage"],
            d["topology"],
            d["epochs"],
            d["loss"],
            Transition(d["reason"]),
            d["epoch_losses"],
            d["checkpoint"],
        )


StageCallback = Callable[[NetworkTopology, StageRecord], None]


def snapshot_id(net: NetworkTopology) -> str:
    """Content hash of the network as it would be checkpointed."""
    encoded = CheckpointEncoder(Checkpoint(net, {})).result
    return f"{net.conv_layer_count}L-{hashlib.sha256(encoded).hexdigest()[:12]}"


def epoch_seed(seed: int, stage: int, epoch: int) -> int:
    sequence = np.random.SeedSequence(seed, spawn_key=(EPOCH_STREAM, stage, epoch))
    return int(sequence.generate_state(1)[0])


def train_epoch(
    net: NetworkTopology,
    batches: Iterable[Tuple[Tensor, Tensor]],
    loss: Optional[EdgeMapSpec],
    optimizer: OptimizerState,
) -> float:
    """One pass of forward, loss, backward and optimizer step per batch.

    Returns the mean of the per-batch losses.
    """
    losses = []
    dtype = net.dtype.numpy
    for noisy, clean in batches:
        pred, tape = forward(net, np.asarray(noisy, dtype=dtype))
        value, grad = compute_loss(pred, np.asarray(clean, dtype=dtype), loss)
        if not math.isfinite(value):
            raise DivergenceError(f"Training loss is {value}")
        _, grads = backward(net, tape, grad)
        optimizer_step(net.params, grads, optimizer)
        losses.append(value)
    if not losses:
        raise ValueError("No batches to train on")
    return math.fsum(losses) / len(losses)


def plateaued(losses: Sequence[float], window: int, tolerance: float) -> bool:
    """Relative improvement over the last ``window`` epochs is below ``tolerance``."""
    if len(losses) <= window:
        return False
    before, now = losses[-1 - window], losses[-1]
    return (before - now) / before < tolerance


@dataclass
class TrainingConfig:
    """What every stage trains with."""

    optimizer: OptimizerState = field(default_factory=OptimizerState)
    loss: Optional[EdgeMapSpec] = None
    batch_size: int = DEFAULT_BATCH_SIZE


def run_epochs(
    net: NetworkTopology,
    pairs: Sequence[PatchPair],
    config: TrainingConfig,
    seed: int,
    stage: int,
    max_epochs: int,
    stop: Callable[[List[float]], Optional[Transition]],
    cap_reason: Transition = Transition.EPOCH_CAP,
) -> StageRecord:
    """Train ``net`` in place with a fresh optimizer until ``stop`` names a
    transition or ``max_epochs`` run out."""
    optimizer = config.optimizer.fresh()
    losses: List[float] = []
    reason = cap_reason
    for epoch in range(max_epochs):
        batches = batch_iterator(pairs, config.batch_size, epoch_seed(seed, stage, epoch))
        try:
            losses.append(train_epoch(net, batches, config.loss, optimizer))
        except DivergenceError as e:
            raise DivergenceError(str(e), stage, epoch) from e
        logger.debug(f"Stage {stage} epoch {epoch}: loss {losses[-1]:.6g}")
        transition = stop(losses)
        if transition is not None:
            reason = transition
            break

    if reason is Transition.EPOCH_CAP:
        logger.warning(f"Stage {stage} hit the epoch cap of {max_epochs} epochs")
    record = StageRecord(stage, snapshot_id(net), len(losses), losses[-1], reason, losses)
    logger.info(
        f"Stage {stage} ({net.conv_layer_count} layers) finished after {record.epochs} "
        f"epochs, loss {record.final_loss:.6g}, {reason.value}"
    )
    return record

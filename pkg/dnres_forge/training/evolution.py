"""Incremental evolution of a trained DN-ResNet into a DS-DN-ResNet.

ResBlocks are replaced by DS-ResBlocks one at a time starting at the tail,
each replacement followed by a fixed number of fine-tuning epochs. The
one-shot variant replaces every block at once and fine-tunes for the same
total number of epochs.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from dnres_forge.errors import TopologyError
from dnres_forge.net.topology import (
    INIT_STD,
    LayerKind,
    NetworkTopology,
    evolve_block_to_ds,
)
from dnres_forge.noise import RngStream
from dnres_forge.patches import PatchPair
from dnres_forge.training.common import (
    INIT_STREAM,
    StageCallback,
    StageRecord,
    TrainingConfig,
    Transition,
    run_epochs,
)

logger = logging.getLogger(__name__)

# "fine-tuning will last 10 epochs for each evolution stage"
FINE_TUNE_EPOCHS = 10


@dataclass
class EvolutionPlan:
    fine_tune_epochs: int = FINE_TUNE_EPOCHS
    one_shot: bool = False
    training: TrainingConfig = field(default_factory=TrainingConfig)
    init_std: float = INIT_STD

    def __post_init__(self):
        if self.fine_tune_epochs < 1:
            raise ValueError(f"fine_tune_epochs must be >= 1, not {self.fine_tune_epochs}")


def _never(losses: List[float]) -> Optional[Transition]:
    return None


def resblock_tail_indices(net: NetworkTopology) -> List[int]:
    """Tail-first indices (0 = nearest the output) of the remaining ResBlocks."""
    blocks = net.blocks
    return [
        i
        for i in range(len(blocks))
        if blocks[len(blocks) - 1 - i].kind is LayerKind.RESBLOCK
    ]


def run_evolution(
    net: NetworkTopology,
    plan: EvolutionPlan,
    pairs: Sequence[PatchPair],
    seed: int,
    on_stage: Optional[StageCallback] = None,
) -> Tuple[NetworkTopology, List[StageRecord]]:
    """Returns the evolved network (``net`` itself is left untouched) and one
    record per fine-tuning stage, numbered from 1."""
    indices = resblock_tail_indices(net)
    if not indices:
        raise TopologyError("Network has no ResBlock to evolve")
    if not pairs:
        raise ValueError("Evolution needs a nonempty patch set")

    history: List[StageRecord] = []

    def evolve(current: NetworkTopology, stage: int, index: int) -> NetworkTopology:
        rng = RngStream(seed, (INIT_STREAM, stage)).generator()
        evolved = evolve_block_to_ds(current, index, rng, plan.init_std)
        logger.info(f"Evolution stage {stage}: {evolved.provenance[-1]}")
        return evolved

    def fine_tune(current: NetworkTopology, stage: int, epochs: int):
        record = run_epochs(
            current, pairs, plan.training, seed, stage, epochs, _never, Transition.SCHEDULE
        )
        history.append(record)
        if on_stage is not None:
            on_stage(current, record)

    if plan.one_shot:
        for stage, index in enumerate(indices, 1):
            net = evolve(net, stage, index)
        fine_tune(net, 1, plan.fine_tune_epochs * len(indices))
        return net, history

    for stage, index in enumerate(indices, 1):
        net = evolve(net, stage, index)
        fine_tune(net, stage, plan.fine_tune_epochs)
    return net, history

"""Cascade training: grow the network one block per stage, inheriting weights.

Stage 0 trains the 3-layer base until its loss plateaus. Every later stage
inserts a block just before the output layer and trains until the epoch's
mean loss is at most ``transition_ratio`` times the previous stage's final
loss. Every stage is capped at ``epoch_cap`` epochs.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from dnres_forge.net.topology import (
    INIT_STD,
    LayerKind,
    NetworkTopology,
    build_base,
    insert_ds_resblock,
    insert_resblock,
)
from dnres_forge.noise import NoiseModel, RngStream
from dnres_forge.nn.tensor import DEFAULT_DTYPE, DType
from dnres_forge.patches import PatchPair
from dnres_forge.training.common import (
    INIT_STREAM,
    StageCallback,
    StageRecord,
    TrainingConfig,
    Transition,
    plateaued,
    run_epochs,
)

logger = logging.getLogger(__name__)

# "3% lower than previous stage"
TRANSITION_RATIO = 0.97
MAX_BLOCKS = 5
EPOCH_CAP = 100
PLATEAU_WINDOW = 3
PLATEAU_TOLERANCE = 1e-3


@dataclass
class CascadePlan:
    max_blocks: int = MAX_BLOCKS
    transition_ratio: float = TRANSITION_RATIO
    epoch_cap: int = EPOCH_CAP
    training: TrainingConfig = field(default_factory=TrainingConfig)
    blind: bool = False
    models: List[NoiseModel] = field(default_factory=list)
    plateau_window: int = PLATEAU_WINDOW
    plateau_tolerance: float = PLATEAU_TOLERANCE
    block_kind: LayerKind = LayerKind.RESBLOCK
    one_shot: bool = False
    init_std: float = INIT_STD
    dtype: DType = DEFAULT_DTYPE

    def __post_init__(self):
        if not 0 < self.transition_ratio < 1:
            raise ValueError(f"transition_ratio must be in (0, 1), not {self.transition_ratio}")
        if self.max_blocks < 0:
            raise ValueError(f"max_blocks must be >= 0, not {self.max_blocks}")
        if self.epoch_cap < 1:
            raise ValueError(f"epoch_cap must be >= 1, not {self.epoch_cap}")
        if self.block_kind not in (LayerKind.RESBLOCK, LayerKind.DS_RESBLOCK):
            raise ValueError(f"Cannot cascade {self.block_kind.value} layers")
        if self.blind and len(self.models) < 2:
            raise ValueError(f"Blind training mixes >= 2 noise models, not {len(self.models)}")
        if not self.blind and len(self.models) > 1:
            raise ValueError(f"Non-blind training takes one noise model, not {len(self.models)}")

    @property
    def noise_description(self) -> str:
        if not self.models:
            return "unlisted noise models"
        labels = ", ".join(model.label for model in self.models)
        return f"blind mix of {labels}" if self.blind else labels


def _check_pairs(plan: CascadePlan, pairs: Sequence[PatchPair]):
    """Every pair must come from one of the plan's noise models, if it lists any."""
    if not plan.models:
        return
    allowed = set(range(len(plan.models)))
    found = {pair.model_index for pair in pairs}
    if not found <= allowed:
        raise ValueError(
            f"Patches from noise models {sorted(found - allowed)} are outside the plan's "
            f"{plan.noise_description}"
        )


def _insert(net: NetworkTopology, plan: CascadePlan, seed: int, stage: int) -> NetworkTopology:
    rng = RngStream(seed, (INIT_STREAM, stage)).generator()
    if plan.block_kind is LayerKind.DS_RESBLOCK:
        return insert_ds_resblock(net, rng, plan.init_std)
    return insert_resblock(net, rng, plan.init_std)


def _plateau_rule(plan: CascadePlan):
    def stop(losses: List[float]) -> Optional[Transition]:
        if plateaued(losses, plan.plateau_window, plan.plateau_tolerance):
            return Transition.PLATEAU
        return None

    return stop


def _threshold_rule(plan: CascadePlan, previous_loss: float):
    target = plan.transition_ratio * previous_loss

    def stop(losses: List[float]) -> Optional[Transition]:
        if losses[-1] <= target:
            return Transition.LOSS_THRESHOLD_MET
        return None

    return stop


def run_cascade(
    plan: CascadePlan,
    pairs: Sequence[PatchPair],
    seed: int,
    on_stage: Optional[StageCallback] = None,
) -> Tuple[NetworkTopology, List[StageRecord]]:
    """Train a network of up to ``plan.max_blocks`` blocks; returns it with
    one record per stage.

    With ``plan.one_shot`` the full-depth network is built at once and trained
    as a single stage under the stage-0 stopping rule.
    """
    if not pairs:
        raise ValueError("Cascade training needs a nonempty patch set")
    _check_pairs(plan, pairs)
    logger.info(
        f"Cascade of up to {plan.max_blocks} {plan.block_kind.value} blocks on "
        f"{plan.noise_description}"
    )

    base_rng = RngStream(seed, (INIT_STREAM, 0)).generator()
    net = build_base(base_rng, plan.init_std, plan.dtype)
    history: List[StageRecord] = []

    def finish(record: StageRecord):
        history.append(record)
        if on_stage is not None:
            on_stage(net, record)

    if plan.one_shot:
        for stage in range(1, plan.max_blocks + 1):
            net = _insert(net, plan, seed, stage)
        logger.info(f"One-shot training of {net.conv_layer_count} layers")
        finish(run_epochs(net, pairs, plan.training, seed, 0, plan.epoch_cap, _plateau_rule(plan)))
        return net, history

    finish(run_epochs(net, pairs, plan.training, seed, 0, plan.epoch_cap, _plateau_rule(plan)))
    for stage in range(1, plan.max_blocks + 1):
        net = _insert(net, plan, seed, stage)
        logger.info(f"Stage {stage}: inserted {net.blocks[-1].name}")
        rule = _threshold_rule(plan, history[-1].final_loss)
        finish(run_epochs(net, pairs, plan.training, seed, stage, plan.epoch_cap, rule))
    return net, history

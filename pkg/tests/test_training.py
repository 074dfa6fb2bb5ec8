import logging
from dataclasses import replace

import numpy as np
import pytest
from dnres_forge.errors import DivergenceError, TopologyError
from dnres_forge.losses import EdgeMapSpec
from dnres_forge.net.topology import (
    INIT_STD,
    LayerKind,
    build_base,
    evolve_block_to_ds,
    insert_resblock,
)
from dnres_forge.noise import Gaussian, RngStream
from dnres_forge.nn.optim import OptimizerKind, OptimizerState
from dnres_forge.patches import (
    OFFSET,
    DatasetManifest,
    PatchPair,
    batch_iterator,
    load_patch_pairs,
    read_manifest,
)
from dnres_forge.training.cascade import CascadePlan, run_cascade
from dnres_forge.training.common import (
    INIT_STREAM,
    StageRecord,
    TrainingConfig,
    Transition,
    epoch_seed,
    plateaued,
    run_epochs,
    snapshot_id,
    train_epoch,
)
from dnres_forge.training.evolution import EvolutionPlan, resblock_tail_indices, run_evolution

FROZEN = TrainingConfig(OptimizerState(OptimizerKind.SGD, 0.0))
FAST = TrainingConfig(OptimizerState(learning_rate=1e-3))


@pytest.fixture(scope="module")
def pairs(manifest):
    return load_patch_pairs(DatasetManifest(read_manifest(manifest), [Gaussian(25)]))


def test_zero_learning_rate_changes_nothing(pairs, rng):
    net = build_base(rng)
    before = net.copy()
    loss = train_epoch(net, batch_iterator(pairs, 4), None, FROZEN.optimizer.fresh())

    assert np.isfinite(loss) and loss > 0
    assert net.same_weights(before)


def test_training_reduces_loss(pairs, rng):
    net = insert_resblock(build_base(rng), rng)
    record = run_epochs(net, pairs, FAST, seed=0, stage=0, max_epochs=6, stop=lambda _: None)

    assert record.epochs == 6
    assert record.reason is Transition.EPOCH_CAP
    assert record.epoch_losses[-1] < record.epoch_losses[0]
    assert record.final_loss == record.epoch_losses[-1]


def test_edge_aware_training_runs(pairs, rng):
    net = build_base(rng)
    config = TrainingConfig(OptimizerState(learning_rate=1e-3), EdgeMapSpec(), 8)
    record = run_epochs(net, pairs, config, 0, 0, 2, lambda _: None)
    assert all(np.isfinite(record.epoch_losses))


def test_overfits_a_single_pair(rng):
    side = OFFSET * 2 + 4
    ramp = np.linspace(0.2, 0.8, side, dtype=np.float32)
    clean = (ramp[:, None] + ramp[None, :]).reshape(1, 1, side, side) / 2
    noisy = Gaussian(5).degrade(clean, RngStream(3).generator())
    pair = PatchPair(noisy, clean[:, :, OFFSET:-OFFSET, OFFSET:-OFFSET], "ramp", (0, 0))

    config = TrainingConfig(OptimizerState(learning_rate=1e-2), batch_size=1)
    record = run_epochs(build_base(rng), [pair], config, 0, 0, 200, lambda _: None)

    assert record.epoch_losses[-1] < 0.01 * record.epoch_losses[0]


def test_divergence_names_stage_and_epoch(pairs, rng):
    net = build_base(rng)
    net.params["c_out.bias"][0] = np.inf
    with pytest.raises(DivergenceError) as info:
        run_epochs(net, pairs, FAST, 0, 3, 5, lambda _: None)
    assert (info.value.stage, info.value.epoch) == (3, 0)


@pytest.mark.parametrize(
    ("losses", "expected"),
    [
        ([1.0, 1.0, 1.0], False),
        ([1.0, 1.0, 1.0, 1.0], True),
        ([1.0, 0.9, 0.8, 0.7], False),
        ([1.0, 0.5, 0.5, 0.5, 0.4999], True),
    ],
)
def test_plateau(losses, expected):
    assert plateaued(losses, 3, 1e-3) is expected


def test_epoch_seeds():
    assert epoch_seed(1, 2, 3) == epoch_seed(1, 2, 3)
    seeds = {epoch_seed(1, 2, 3), epoch_seed(1, 2, 4), epoch_seed(1, 3, 3), epoch_seed(2, 2, 3)}
    assert len(seeds) == 4


def test_stage_record_json():
    record = StageRecord(
        2, "7L-abc", 3, 0.5, Transition.LOSS_THRESHOLD_MET, [0.7, 0.6, 0.5], "stage2.dnres"
    )
    assert StageRecord.from_json(record.to_json()) == record
    assert '"reason": "loss_threshold_met"' in record.to_json()


def test_snapshot_id(rng):
    net = build_base(rng)
    assert snapshot_id(net).startswith("3L-")
    assert snapshot_id(net) == snapshot_id(net.copy())
    changed = net.copy()
    changed.params["c1.bias"][0] = 1
    assert snapshot_id(changed) != snapshot_id(net)


def test_cascade_without_blocks(pairs):
    plan = CascadePlan(max_blocks=0, epoch_cap=2, training=FAST)
    net, history = run_cascade(plan, pairs, seed=0)

    assert net.stage_count == 0
    assert len(history) == 1
    assert history[0].stage == 0


def test_cascade_inherits_weights(pairs):
    plan = CascadePlan(max_blocks=2, epoch_cap=2, training=FROZEN)
    seen = []
    net, history = run_cascade(
        plan, pairs, 4, on_stage=lambda n, r: seen.append((n.stage_count, r.stage))
    )

    base = build_base(RngStream(4, (INIT_STREAM, 0)).generator(), INIT_STD)
    for name in base.param_names():
        assert np.array_equal(net.params[name], base.params[name])
    assert [b.name for b in net.blocks] == ["rb1", "rb2"]
    assert seen == [(0, 0), (1, 1), (2, 2)]
    # A frozen network never gets 3% better.
    assert [r.reason for r in history] == [Transition.EPOCH_CAP] * 3
    assert [r.epochs for r in history] == [2, 2, 2]


def test_cascade_stage_transition(pairs):
    plan = CascadePlan(
        max_blocks=1, epoch_cap=10, training=TrainingConfig(OptimizerState(learning_rate=1e-2))
    )
    _, history = run_cascade(plan, pairs, 0)

    assert history[0].reason in (Transition.PLATEAU, Transition.EPOCH_CAP)
    stage1 = history[1]
    if stage1.reason is Transition.LOSS_THRESHOLD_MET:
        assert stage1.final_loss <= 0.97 * history[0].final_loss
        assert all(loss > 0.97 * history[0].final_loss for loss in stage1.epoch_losses[:-1])
    else:
        assert stage1.reason is Transition.EPOCH_CAP
        assert stage1.epochs == 10


def test_cascade_is_deterministic(pairs):
    plan = CascadePlan(max_blocks=1, epoch_cap=2, training=FAST)
    net_a, history_a = run_cascade(plan, pairs, 9)
    net_b, history_b = run_cascade(plan, pairs, 9)
    net_c, _ = run_cascade(plan, pairs, 10)

    assert net_a.same_weights(net_b)
    assert history_a == history_b
    assert not net_a.same_weights(net_c)


def test_ds_cascade(pairs):
    plan = CascadePlan(max_blocks=2, epoch_cap=1, training=FAST, block_kind=LayerKind.DS_RESBLOCK)
    net, _ = run_cascade(plan, pairs, 0)
    assert [b.name for b in net.blocks] == ["dsrb1", "dsrb2"]


def test_one_shot_cascade(pairs):
    plan = CascadePlan(max_blocks=2, epoch_cap=2, training=FAST, one_shot=True)
    net, history = run_cascade(plan, pairs, 0)
    assert net.stage_count == 2
    assert len(history) == 1
    assert history[0].topology_id.startswith("7L-")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"transition_ratio": 1.0},
        {"max_blocks": -1},
        {"epoch_cap": 0},
        {"block_kind": LayerKind.CONV},
        {"blind": True, "models": [Gaussian(25)]},
        {"models": [Gaussian(25), Gaussian(50)]},
    ],
)
def test_plan_validation(kwargs):
    with pytest.raises(ValueError):
        CascadePlan(**kwargs)


def test_cascade_names_its_noise(pairs, caplog):
    caplog.set_level(logging.INFO)
    plan = CascadePlan(max_blocks=0, epoch_cap=1, training=FAST, models=[Gaussian(25)])
    run_cascade(plan, pairs, 0)
    assert "Cascade of up to 0 resblock blocks on gaussian:25" in caplog.text

    blind = CascadePlan(blind=True, models=[Gaussian(25), Gaussian(50)])
    assert blind.noise_description == "blind mix of gaussian:25, gaussian:50"

    stray = [replace(pairs[0], model_index=1)]
    with pytest.raises(ValueError, match=r"\[1\]"):
        run_cascade(plan, stray, 0)


@pytest.fixture
def trained(rng):
    net = build_base(rng)
    for _ in range(3):
        net = insert_resblock(net, rng)
    return net


def test_evolution_is_tail_first(pairs, trained):
    records = []
    evolved, history = run_evolution(
        trained,
        EvolutionPlan(fine_tune_epochs=1, training=FAST),
        pairs,
        0,
        on_stage=lambda n, r: records.append(r.stage),
    )

    assert [b.kind for b in evolved.blocks] == [LayerKind.DS_RESBLOCK] * 3
    replaced = [e.replaced for e in evolved.provenance if e.action == "replaced"]
    assert replaced == ["rb3", "rb2", "rb1"]
    assert [r.stage for r in history] == records == [1, 2, 3]
    assert all(r.reason is Transition.SCHEDULE and r.epochs == 1 for r in history)
    assert [b.kind for b in trained.blocks] == [LayerKind.RESBLOCK] * 3


def test_evolution_one_shot(pairs, trained):
    evolved, history = run_evolution(
        trained, EvolutionPlan(fine_tune_epochs=1, one_shot=True, training=FAST), pairs, 0
    )
    assert resblock_tail_indices(evolved) == []
    assert len(history) == 1
    assert history[0].epochs == 3


def test_evolution_resumes_partial(pairs, trained):
    partial = evolve_block_to_ds(trained, 0, std=0.0)
    assert resblock_tail_indices(partial) == [1, 2]
    _, history = run_evolution(partial, EvolutionPlan(fine_tune_epochs=1, training=FAST), pairs, 0)
    assert len(history) == 2


def test_evolution_needs_resblocks(pairs, rng):
    with pytest.raises(TopologyError):
        run_evolution(build_base(rng), EvolutionPlan(), pairs, 0)
    with pytest.raises(ValueError):
        EvolutionPlan(fine_tune_epochs=0)

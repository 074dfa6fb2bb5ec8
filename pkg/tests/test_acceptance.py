"""Desk-scale end-to-end runs; selected with ``pytest -m slow``."""
import numpy as np
import pytest
from dnres_forge.noise import Gaussian
from dnres_forge.nn.optim import OptimizerState
from dnres_forge.patches import DatasetManifest, load_patch_pairs, read_manifest
from dnres_forge.synthetic import write_corpus
from dnres_forge.training.cascade import CascadePlan, run_cascade
from dnres_forge.training.common import TrainingConfig, Transition
from dnres_forge.training.evaluation import evaluate
from dnres_forge.training.evolution import EvolutionPlan, run_evolution

pytestmark = pytest.mark.slow

SIGMA = 25
EVOLUTION_SEEDS = range(10)
TRAINING = TrainingConfig(OptimizerState(learning_rate=1e-3), batch_size=16)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return read_manifest(write_corpus(tmp_path_factory.mktemp("desk"), 24, seed=7, test_count=4))


@pytest.fixture(scope="module")
def desk_pairs(corpus):
    return load_patch_pairs(DatasetManifest(corpus, [Gaussian(SIGMA)], seed=7), stride=8)


def cascade(pairs, seed):
    plan = CascadePlan(max_blocks=2, epoch_cap=100, training=TRAINING, models=[Gaussian(SIGMA)])
    return run_cascade(plan, pairs, seed)


def test_desk_cascade(corpus, desk_pairs):
    net, history = cascade(desk_pairs, seed=11)

    assert [r.stage for r in history] == [0, 1, 2]
    for previous, record in zip(history, history[1:]):
        if record.reason is Transition.LOSS_THRESHOLD_MET:
            assert record.final_loss <= 0.97 * previous.final_loss

    table = evaluate(net, DatasetManifest(corpus, [Gaussian(SIGMA)], seed=3))
    assert table.means["psnr"] - table.means["psnr_noisy"] >= 2.0

    _, again = cascade(desk_pairs, seed=11)
    assert [r.to_json() for r in again] == [r.to_json() for r in history]


def test_incremental_evolution_beats_one_shot(desk_pairs):
    pairs = desk_pairs[:64]
    incremental, one_shot = [], []
    for seed in EVOLUTION_SEEDS:
        plan = CascadePlan(max_blocks=2, epoch_cap=5, training=TRAINING)
        trained, _ = run_cascade(plan, pairs, seed)
        for one, losses in ((False, incremental), (True, one_shot)):
            _, history = run_evolution(trained, EvolutionPlan(3, one, TRAINING), pairs, seed)
            losses.append(history[-1].final_loss)

    assert np.median(incremental) <= np.median(one_shot)

import csv
import math

import pytest
from dnres_forge.net.topology import build_base, identity_network, insert_ds_resblock
from dnres_forge.noise import Gaussian, Poisson
from dnres_forge.nn.tensor import DType
from dnres_forge.patches import DatasetManifest, Split, read_manifest
from dnres_forge.training.evaluation import COLUMNS, EvaluationTable, evaluate


@pytest.fixture
def identity():
    return identity_network(insert_ds_resblock(build_base(std=0.0, dtype=DType.F64), std=0.0))


def test_perfect_reconstruction(manifest, identity):
    # The clean images stand in for the degraded ones.
    entries = read_manifest(manifest)
    table = evaluate(identity, DatasetManifest(entries, degraded_dir=manifest.parent))

    assert len(table.rows) == 2
    for row in table.rows:
        assert row["model"] == "external"
        assert row["psnr"] == row["psnr_noisy"] == math.inf
        assert row["ssim"] == pytest.approx(1.0)
    assert table.means["psnr"] == math.inf


def test_rows_per_image_and_model(manifest, identity):
    models = [Gaussian(25), Poisson(4)]
    table = evaluate(identity, DatasetManifest(read_manifest(manifest), models, seed=3))

    assert [row["model"] for row in table.rows] == ["gaussian:25", "poisson:4"] * 2
    assert all(math.isfinite(row["psnr_noisy"]) for row in table.rows)
    again = evaluate(identity, DatasetManifest(read_manifest(manifest), models, seed=3))
    assert again.rows == table.rows


def test_models_override_manifest(manifest, identity):
    entries = read_manifest(manifest)
    table = evaluate(identity, DatasetManifest(entries, [Gaussian(25)]), models=[Gaussian(50)])
    assert {row["model"] for row in table.rows} == {"gaussian:50"}


def test_needs_test_split_and_source(manifest, identity):
    with pytest.raises(ValueError):
        evaluate(identity, DatasetManifest(read_manifest(manifest)))
    train_only = [(p, s) for p, s in read_manifest(manifest) if s is Split.TRAIN]
    with pytest.raises(ValueError):
        evaluate(identity, DatasetManifest(train_only, [Gaussian(25)]))


def test_csv(tmp_path):
    table = EvaluationTable(
        [
            dict(zip(COLUMNS, ("a.pgm", "gaussian:25", 20.0, 0.5, 30.0, 0.9))),
            dict(zip(COLUMNS, ("b.pgm", "gaussian:25", 22.0, 0.7, math.inf, 1.0))),
        ]
    )
    assert table.means["psnr_noisy"] == 21.0
    path = tmp_path / "metrics.csv"
    table.write_csv(path)

    with open(path, newline="") as file:
        rows = list(csv.DictReader(file))
    assert tuple(rows[0]) == COLUMNS
    assert rows[0]["psnr"] == "30.000000"
    assert rows[1]["psnr"] == "inf"
    assert rows[2]["image"] == "mean"
    assert rows[2]["ssim_noisy"] == "0.600000"
    assert rows[2]["psnr"] == "inf"


def test_empty_table_means():
    assert all(math.isnan(v) for v in EvaluationTable().means.values())

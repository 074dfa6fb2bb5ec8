import logging
from argparse import ArgumentParser, ArgumentTypeError

import pytest
from dnres_forge.checkpoint import load_checkpoint, read_checkpoint
from dnres_forge.cli import main
from dnres_forge.images import load_image
from dnres_forge.net.topology import LayerKind
from dnres_forge.scripts.train import FINAL_NAME, HISTORY_NAME
from dnres_forge.training.common import StageRecord
from dnres_forge.utility import (
    CONFIG_NAME,
    LOG_NAME,
    Args,
    add_args,
    config_tokens,
    expand_config,
    image_size,
    read_config,
    slug,
)


@pytest.fixture(autouse=True)
def info_logs(caplog):
    caplog.set_level(logging.INFO)


@pytest.fixture(scope="module")
def trained(manifest, tmp_path_factory):
    """Output directory of a one-block training run."""
    out = tmp_path_factory.mktemp("trained")
    argv = ["train", "-m", str(manifest), "-d", str(out), "-b", "1", "--epoch-cap", "1"]
    assert main(argv) == 0
    return out


def test_count(caplog):
    assert main(["count", "-b", "5"]) == 0
    assert "Parameters (weights only): 149,344" in caplog.text
    assert "45,878,476,800 (45.9 B)" in caplog.text
    assert "MACs per resblock at 640x480: 5,662,310,400" in caplog.text
    assert "published MACs: 45.9 B" in caplog.text


def test_count_ds(caplog):
    assert main(["count", "-b", "5", "--block-kind", "ds_resblock"]) == 0
    assert "Parameters (weights only): 63,744" in caplog.text
    assert "published parameters: 63,728" in caplog.text
    assert "19,582,156,800 (19.6 B)" in caplog.text


def test_zero_sigma_noise_is_identity(manifest, tmp_path):
    source = next(manifest.parent.glob("*.pgm"))
    out = tmp_path / "same.pgm"
    assert main(["noise", "-i", str(source), "-o", str(out), "--sigma", "0"]) == 0
    assert out.read_bytes() == source.read_bytes()


def test_noise_seeds(manifest, tmp_path):
    source = next(manifest.parent.glob("*.pgm"))
    outputs = []
    for name, seed in (("a", "4"), ("b", "4"), ("c", "5")):
        out = tmp_path / f"{name}.pgm"
        argv = ["noise", "-i", str(source), "-o", str(out), "--seed", seed, "--sigma", "25"]
        assert main(argv) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0] != outputs[2]
    assert (tmp_path / CONFIG_NAME).exists()


def test_noise_directory(manifest, tmp_path):
    out = tmp_path / "noisy"
    argv = ["noise", "-i", str(manifest.parent), "-o", str(out), "--model", "poisson"]
    assert main(argv + ["--peak", "4"]) == 0
    assert len(list(out.glob("*.pgm"))) == 6


def test_noise_validation(caplog):
    argv = ["noise", "--validate", "--model", "poisson", "--peak", "4", "--samples", "200000"]
    assert main(argv) == 0
    assert "Poisson pmf chi-square at lambda=8" in caplog.text


@pytest.mark.parametrize(
    "argv",
    [
        ["noise", "--model", "poisson", "--validate"],
        ["noise"],
        ["denoise", "-c", "missing.dnres", "-i", "missing.pgm"],
    ],
)
def test_runtime_errors_exit_1(argv, caplog):
    assert main(argv) == 1
    assert "failed" in caplog.text


@pytest.mark.parametrize(
    "argv",
    [
        ["train"],
        ["count", "--mac-mode", "approximate"],
        ["noise", "--model", "uniform"],
        ["train", "-m", "x", "--noise", "gaussian"],
        ["unknown"],
    ],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_train_outputs(trained):
    for name in (FINAL_NAME, HISTORY_NAME, CONFIG_NAME, LOG_NAME, "stage0.dnres", "stage1.dnres"):
        assert (trained / name).exists(), name

    lines = (trained / HISTORY_NAME).read_text().splitlines()
    records = [StageRecord.from_json(line) for line in lines]
    assert [r.stage for r in records] == [0, 1]
    assert records[1].checkpoint == "stage1.dnres"

    final = read_checkpoint(trained / FINAL_NAME)
    assert final.topology.stage_count == 1
    assert final.metadata["noise"] == ["gaussian:25"]
    assert "blocks=1" in (trained / CONFIG_NAME).read_text().splitlines()


def test_train_is_deterministic(manifest, trained, tmp_path):
    out = tmp_path / "again"
    argv = ["train", "-m", str(manifest), "-d", str(out), "-b", "1", "--epoch-cap", "1"]
    assert main(argv) == 0
    assert (out / FINAL_NAME).read_bytes() == (trained / FINAL_NAME).read_bytes()


def test_train_per_model(manifest, tmp_path, caplog):
    argv = ["train", "-m", str(manifest), "-d", str(tmp_path), "-b", "0", "--epoch-cap", "1"]
    assert main(argv + ["-n", "gaussian:10", "-n", "poisson:2"]) == 0
    assert (tmp_path / "gaussian-10" / FINAL_NAME).exists()
    assert (tmp_path / "poisson-2" / FINAL_NAME).exists()
    assert "3 layers: 57,184 parameters (weights only)" in caplog.text

    argv = ["evolve", "-c", str(tmp_path / "poisson-2" / FINAL_NAME), "-m", str(manifest)]
    assert main(argv + ["-d", str(tmp_path / "evolved")]) == 1

    blind = tmp_path / "blind"
    argv = ["train", "-m", str(manifest), "-d", str(blind), "-b", "0", "--epoch-cap", "1"]
    assert main(argv + ["-n", "gaussian:10", "-n", "poisson:2", "--blind"]) == 0
    assert read_checkpoint(blind / FINAL_NAME).metadata["noise"] == ["gaussian:10", "poisson:2"]


def test_config_overlay(manifest, tmp_path):
    config = tmp_path / "overlay.txt"
    config.write_text(
        "# quick run\nblocks=0\nepoch_cap=1\nnoise=gaussian:10,gaussian:20\nblind=true\n"
    )
    out = tmp_path / "out"
    argv = ["train", "--config", str(config), "-m", str(manifest), "-d", str(out)]
    assert main(argv + ["-n", "gaussian:50"]) == 0

    written = (out / CONFIG_NAME).read_text().splitlines()
    assert "noise=gaussian:50" in written
    assert "blocks=0" in written
    assert "blind=true" in written
    assert not any(line.startswith("config=") for line in written)


def test_written_config_reproduces_run(manifest, trained, tmp_path):
    out = tmp_path / "replayed"
    argv = ["train", "--config", str(trained / CONFIG_NAME), "-d", str(out)]
    assert main(argv) == 0
    assert (out / FINAL_NAME).read_bytes() == (trained / FINAL_NAME).read_bytes()


def test_evolve(manifest, trained, tmp_path, caplog):
    argv = ["evolve", "-c", str(trained / FINAL_NAME), "-m", str(manifest), "-d", str(tmp_path)]
    assert main(argv + ["--fine-tune-epochs", "1"]) == 0

    evolved = load_checkpoint(tmp_path / "evolved.dnres")
    assert [b.kind for b in evolved.blocks] == [LayerKind.DS_RESBLOCK]
    assert (tmp_path / "stage1.dnres").exists()
    assert "1 evolution stages" in caplog.text


def test_denoise(manifest, trained, tmp_path):
    source = next(manifest.parent.glob("*.pgm"))
    out = tmp_path / "clean.png"
    argv = ["denoise", "-c", str(trained / FINAL_NAME), "-i", str(source), "-o", str(out)]
    assert main(argv + ["--tile", "20"]) == 0
    assert load_image(out).shape == load_image(source).shape


def test_evaluate(manifest, trained, tmp_path):
    argv = ["eval", "-c", str(trained / FINAL_NAME), "-m", str(manifest), "-d", str(tmp_path)]
    assert main(argv + ["-n", "gaussian:25", "-n", "poisson:4"]) == 0
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "image,model,psnr_noisy,ssim_noisy,psnr,ssim"
    assert len(lines) == 1 + 4 + 1
    assert lines[-1].startswith("mean,")


def test_gradcheck(caplog):
    assert main(["gradcheck", "-b", "1", "--block-kind", "ds_resblock", "--samples", "4"]) == 0
    assert "5-layer network PASS" in caplog.text


def test_synth(tmp_path):
    argv = ["synth", "-d", str(tmp_path), "--count", "3", "--test-count", "1", "--side", "40"]
    assert main(argv) == 0
    assert (tmp_path / "manifest.txt").read_text().count("\n") == 3


def test_config_helpers(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("a=1\n\n# skipped\nflag=false\n")
    assert read_config(path) == [("a", "1"), ("flag", "false")]
    flags = [("epoch_cap", "3"), ("blind", "true"), ("one_shot", "false")]
    assert config_tokens(flags) == ["--epoch-cap", "3", "--blind", "--no-one-shot"]
    noise = [("noise", "poisson:1, poisson:2"), ("seed", "4")]
    assert config_tokens(noise, skip={"seed"}) == ["--noise", "poisson:1", "--noise", "poisson:2"]
    path.write_text("no equals sign\n")
    with pytest.raises(ValueError):
        read_config(path)


def test_explicit_flags_win(tmp_path):
    config = tmp_path / "c.txt"
    config.write_text("seed=3\nblocks=4\n")
    parser = add_args(ArgumentParser(), Args.CONFIG, Args.SEED, Args.BLOCKS)
    argv = expand_config(parser, ["--config", str(config), "--seed=9"])
    args = parser.parse_args(argv)
    assert (args.seed, args.blocks) == (9, 4)


def test_image_size_and_slug():
    assert image_size("640x480") == (480, 640)
    with pytest.raises(ArgumentTypeError):
        image_size("640")
    assert slug("poisson-gaussian:0.5") == "poisson-gaussian-0p5"

"""PSNR / SSIM evaluation over the test split of a manifest."""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from dnres_forge.images import PathLike, load_image
from dnres_forge.losses import psnr, ssim
from dnres_forge.net.topology import NetworkTopology
from dnres_forge.noise import NoiseModel, RngStream
from dnres_forge.patches import DatasetManifest, Split
from dnres_forge.training.inference import BorderMode, denoise_image

logger = logging.getLogger(__name__)

EVAL_STREAM = 20
EXTERNAL_LABEL = "external"
METRICS = ("psnr_noisy", "ssim_noisy", "psnr", "ssim")
COLUMNS = ("image", "model") + METRICS

Row = Dict[str, Union[str, float]]


@dataclass
class EvaluationTable:
    rows: List[Row] = field(default_factory=list)

    @property
    def means(self) -> Dict[str, float]:
        """Column means; any infinite entry makes its mean infinite."""
        if not self.rows:
            return {metric: math.nan for metric in METRICS}
        return {
            metric: math.fsum(float(row[metric]) for row in self.rows) / len(self.rows)
            for metric in METRICS
        }

    def write_csv(self, path: PathLike):
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.DictWriter(file, fieldnames=COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
            means = {k: _fmt(v) for k, v in self.means.items()}
            writer.writerow({"image": "mean", "model": "", **means})
        logger.info(f"Wrote file: {path}")


def _fmt(value: Union[str, float]) -> str:
    if isinstance(value, str):
        return value
    return f"{value:.6f}"


def _row(image: str, model: str, clean, noisy, denoised) -> Row:
    return {
        "image": image,
        "model": model,
        "psnr_noisy": psnr(noisy, clean),
        "ssim_noisy": ssim(noisy, clean),
        "psnr": psnr(denoised, clean),
        "ssim": ssim(denoised, clean),
    }


def evaluate(
    net: NetworkTopology,
    manifest: DatasetManifest,
    models: Optional[Sequence[NoiseModel]] = None,
    border: BorderMode = BorderMode.REPLICATE,
    tile: Optional[int] = None,
) -> EvaluationTable:
    """One row per (test image, noise model): metrics of the noisy input and of
    the denoised output against the clean image.

    Test images are degraded whole from the manifest seed. With
    ``manifest.degraded_dir`` set the degraded images are read from there and
    every image gets a single "external" row.
    """
    models = list(models if models is not None else manifest.models)
    paths = manifest.paths(Split.TEST)
    if not paths:
        raise ValueError("Manifest has no test images")
    if manifest.degraded_dir is None and not models:
        raise ValueError("Evaluation needs noise models or a degraded-image directory")

    table = EvaluationTable()
    for index, path in enumerate(paths):
        clean = load_image(path)
        if manifest.degraded_dir is not None:
            noisy = load_image(manifest.degraded_dir / path.name)
            denoised = denoise_image(net, noisy, border, tile)
            table.rows.append(_row(path.name, EXTERNAL_LABEL, clean, noisy, denoised))
            continue
        for m, model in enumerate(models):
            rng = RngStream(manifest.seed, (EVAL_STREAM, index, m)).generator()
            noisy = model.degrade(clean, rng)
            denoised = denoise_image(net, noisy, border, tile)
            table.rows.append(_row(path.name, model.label, clean, noisy, denoised))
        logger.debug(f"Evaluated {path.name}")

    means = table.means
    logger.info(
        f"Mean PSNR {means['psnr']:.2f} dB (noisy {means['psnr_noisy']:.2f} dB), "
        f"mean SSIM {means['ssim']:.4f} (noisy {means['ssim_noisy']:.4f})"
    )
    return table

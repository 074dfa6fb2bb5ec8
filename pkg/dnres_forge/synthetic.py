"""Procedural desk-scale image corpus: gradients, checkerboards and smoothed noise."""
import logging
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import ndimage

from dnres_forge.images import PathLike, quantize, write_image
from dnres_forge.noise import RngStream
from dnres_forge.patches import Split, write_manifest

logger = logging.getLogger(__name__)

DEFAULT_SIZE = 64
MANIFEST_NAME = "manifest.txt"


def gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    """Linear ramp in a random direction between two random levels."""
    angle = rng.uniform(0, 2 * np.pi)
    low, high = np.sort(rng.uniform(0.05, 0.95, size=2))
    rows, cols = np.mgrid[0:size, 0:size] / (size - 1)
    t = np.cos(angle) * cols + np.sin(angle) * rows
    t = (t - t.min()) / (t.max() - t.min())
    return low + (high - low) * t


def checkerboard(size: int, rng: np.random.Generator) -> np.ndarray:
    cell = int(rng.integers(4, 17))
    dark, light = np.sort(rng.uniform(0.05, 0.95, size=2))
    rows, cols = np.indices((size, size))
    phase_r, phase_c = rng.integers(0, cell, size=2)
    board = ((rows + phase_r) // cell + (cols + phase_c) // cell) % 2
    return np.where(board == 1, light, dark)


def filtered_noise(size: int, rng: np.random.Generator) -> np.ndarray:
    """White noise smoothed by a Gaussian, stretched to [0.05, 0.95]."""
    sigma = rng.uniform(1.5, 4.0)
    smooth = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    smooth = (smooth - smooth.min()) / (smooth.max() - smooth.min())
    return 0.05 + 0.9 * smooth


GENERATORS: Dict[str, Callable[[int, np.random.Generator], np.ndarray]] = {
    "gradient": gradient,
    "checkerboard": checkerboard,
    "noise": filtered_noise,
}


def generate_corpus(
    count: int, seed: int, size: int = DEFAULT_SIZE
) -> List[Tuple[str, np.ndarray]]:
    """``count`` named 8-bit-quantized images, cycling through the generators."""
    kinds = list(GENERATORS)
    corpus = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        rng = RngStream(seed, (i,)).generator()
        image = quantize(GENERATORS[kind](size, rng))
        corpus.append((f"{i:03d}_{kind}", image))
    return corpus


def write_corpus(
    directory: PathLike,
    count: int,
    seed: int,
    size: int = DEFAULT_SIZE,
    test_count: int = 0,
) -> Path:
    """Write the corpus as PGMs plus a manifest; the last ``test_count`` images
    form the test split. Returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not 0 <= test_count < count:
        raise ValueError(f"test_count must be in [0, {count}), not {test_count}")

    entries = []
    for i, (name, image) in enumerate(generate_corpus(count, seed, size)):
        path = directory / f"{name}.pgm"
        write_image(path, image)
        entries.append((path, Split.TEST if i >= count - test_count else Split.TRAIN))

    manifest = directory / MANIFEST_NAME
    write_manifest(manifest, entries)
    return manifest

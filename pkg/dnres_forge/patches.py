"""Clean/noisy training patch pairs, dataset manifests, and shuffled batches.

A pair is a 33×33 window of the degraded image and the centered 17×17 crop
(offset +8, +8) of the same clean-image window: exactly the region a valid
9×9 / 5×5 / 5×5 convolution stack maps the window to.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from dnres_forge.errors import ShapeError
from dnres_forge.images import PathLike, load_image
from dnres_forge.noise import NoiseModel, RngStream
from dnres_forge.nn.tensor import DEFAULT_DTYPE, DType, Tensor

logger = logging.getLogger(__name__)

INPUT_SIZE = 33
TARGET_SIZE = 17
OFFSET = (INPUT_SIZE - TARGET_SIZE) // 2
DEFAULT_STRIDE = 17
DEFAULT_BATCH_SIZE = 64

# Substream tags under one seed.
NOISE_STREAM = 1
PATCH_STREAM = 2
EXTERNAL = -1


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass
class PatchPair:
    noisy: Tensor
    clean: Tensor
    source_id: str
    origin: Tuple[int, int]
    model_index: int = 0


@dataclass
class DatasetManifest:
    entries: List[Tuple[Path, Split]]
    models: List[NoiseModel] = field(default_factory=list)
    degraded_dir: Optional[Path] = None
    seed: int = 0

    def paths(self, split: Split = Split.TRAIN) -> List[Path]:
        return [path for path, s in self.entries if s is split]


def read_manifest(path: PathLike) -> List[Tuple[Path, Split]]:
    """Lines of ``image-path<TAB>split``; relative paths resolve against the
    manifest's directory, blank lines and ``#`` comments are skipped."""
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as file:
        for number, line in enumerate(file, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                image, split = line.split("\t")
                entries.append((path.parent / image, Split(split.strip())))
            except ValueError as e:
                raise ValueError(f"{path}:{number}: expected 'path<TAB>train|test'") from e
    return entries


def write_manifest(path: PathLike, entries: Sequence[Tuple[Path, Split]]):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as file:
        for image, split in entries:
            try:
                image = image.relative_to(path.parent)
            except ValueError:
                pass  # Outside the manifest's directory, keep absolute.
            file.write(f"{image.as_posix()}\t{split.value}\n")
    logger.info(f"Wrote file: {path}")


def window_origins(
    h: int,
    w: int,
    stride: int = DEFAULT_STRIDE,
    rng: Optional[np.random.Generator] = None,
    jitter: int = 0,
) -> List[Tuple[int, int]]:
    """Top-left corners of the 33×33 windows, every one fully inside the image."""
    if stride < 1:
        raise ValueError(f"Stride must be >= 1, not {stride}")
    if jitter and rng is None:
        raise ValueError("An rng is required for jittered extraction")
    last_row, last_col = h - INPUT_SIZE, w - INPUT_SIZE
    origins = []
    for row in range(0, last_row + 1, stride):
        for col in range(0, last_col + 1, stride):
            if jitter:
                dr, dc = rng.integers(-jitter, jitter + 1, size=2)
                row_j = int(np.clip(row + dr, 0, last_row))
                col_j = int(np.clip(col + dc, 0, last_col))
                origins.append((row_j, col_j))
            else:
                origins.append((row, col))
    return origins


def extract_patch_pairs(
    clean: np.ndarray,
    degraded: np.ndarray,
    stride: int = DEFAULT_STRIDE,
    rng: Optional[np.random.Generator] = None,
    jitter: int = 0,
    source_id: str = "",
    model_index: int = 0,
    dtype: DType = DEFAULT_DTYPE,
) -> List[PatchPair]:
    clean2 = np.asarray(clean).reshape(np.shape(clean)[-2:])
    degraded2 = np.asarray(degraded).reshape(np.shape(degraded)[-2:])
    if clean2.shape != degraded2.shape:
        raise ShapeError("image size", clean2.shape, degraded2.shape, "extract_patch_pairs")
    h, w = clean2.shape
    if h < INPUT_SIZE or w < INPUT_SIZE:
        logger.warning(
            f"Image {source_id} is {h}x{w}, smaller than a {INPUT_SIZE}x{INPUT_SIZE} patch; skipped"
        )
        return []

    pairs = []
    for row, col in window_origins(h, w, stride, rng, jitter):
        noisy = degraded2[row : row + INPUT_SIZE, col : col + INPUT_SIZE]
        target = clean2[
            row + OFFSET : row + OFFSET + TARGET_SIZE,
            col + OFFSET : col + OFFSET + TARGET_SIZE,
        ]
        pairs.append(
            PatchPair(
                noisy.astype(dtype.numpy)[np.newaxis, np.newaxis],
                target.astype(dtype.numpy)[np.newaxis, np.newaxis],
                source_id,
                (row, col),
                model_index,
            )
        )
    return pairs


def load_patch_pairs(
    manifest: DatasetManifest,
    split: Split = Split.TRAIN,
    stride: int = DEFAULT_STRIDE,
    jitter: int = 0,
) -> List[PatchPair]:
    """Materialize every pair of one split.

    Each image is degraded whole, once per noise model, from its own substream.
    With several models (blind training) every window takes its input from one
    model chosen uniformly at random. With ``degraded_dir`` set, the degraded
    image is read from there under the clean image's file name instead.
    """
    paths = manifest.paths(split)
    if not paths:
        raise ValueError(f"Manifest has no {split.value} images")
    if manifest.degraded_dir is None and not manifest.models:
        raise ValueError("Manifest needs noise models or a degraded-image directory")

    pairs: List[PatchPair] = []
    for index, path in enumerate(paths):
        clean = load_image(path)
        patch_rng = RngStream(manifest.seed, (PATCH_STREAM, index)).generator()
        source_id = path.name

        if manifest.degraded_dir is not None:
            degraded = load_image(manifest.degraded_dir / path.name)
            pairs.extend(
                extract_patch_pairs(
                    clean, degraded, stride, patch_rng, jitter, source_id, EXTERNAL
                )
            )
            continue

        degraded_by_model = [
            model.degrade(clean, RngStream(manifest.seed, (NOISE_STREAM, index, m)).generator())
            for m, model in enumerate(manifest.models)
        ]
        image_pairs = extract_patch_pairs(
            clean, degraded_by_model[0], stride, patch_rng, jitter, source_id
        )
        if len(manifest.models) > 1:
            for pair in image_pairs:
                m = int(patch_rng.integers(len(manifest.models)))
                row, col = pair.origin
                window = degraded_by_model[m][0, 0, row : row + INPUT_SIZE, col : col + INPUT_SIZE]
                pair.noisy = window.astype(pair.noisy.dtype)[np.newaxis, np.newaxis]
                pair.model_index = m
        pairs.extend(image_pairs)

    logger.info(f"Loaded {len(pairs)} {split.value} patch pairs from {len(paths)} images")
    return pairs


def batch_indices(n: int, batch_size: int, epoch_seed: int) -> Iterator[np.ndarray]:
    """A full permutation of range(n) drawn from ``epoch_seed``, cut into
    batches; the last batch may be short."""
    if n < 1:
        raise ValueError("Cannot batch an empty patch set")
    if batch_size < 1:
        raise ValueError(f"Batch size must be >= 1, not {batch_size}")
    order = RngStream(epoch_seed).generator().permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def batch_iterator(
    pairs: Sequence[PatchPair],
    batch_size: int = DEFAULT_BATCH_SIZE,
    epoch_seed: int = 0,
) -> Iterator[Tuple[Tensor, Tensor]]:
    for indices in batch_indices(len(pairs), batch_size, epoch_seed):
        noisy = np.concatenate([pairs[i].noisy for i in indices])
        clean = np.concatenate([pairs[i].clean for i in indices])
        yield noisy, clean

"""Full-image denoising with border padding, optionally in tiles."""
import logging
from enum import Enum
from typing import Optional

import numpy as np

from dnres_forge.errors import ShapeError
from dnres_forge.net.model import predict
from dnres_forge.net.topology import LayerKind, NetworkTopology
from dnres_forge.nn.tensor import Tensor

logger = logging.getLogger(__name__)

# Valid 9×9, 5×5 and 5×5 convolutions shrink each side by 4 + 2 + 2.
BORDER = 8
MIN_SIZE = 2 * BORDER + 1


class BorderMode(Enum):
    REPLICATE = "replicate"
    REFLECT = "reflect"

    @property
    def numpy(self) -> str:
        return "edge" if self is BorderMode.REPLICATE else "reflect"


def block_halo(net: NetworkTopology) -> int:
    """How far zero padding inside the blocks reaches into a feature map."""
    return sum(2 if node.kind is LayerKind.RESBLOCK else 1 for node in net.blocks)


def denoise_image(
    net: NetworkTopology,
    noisy: np.ndarray,
    border: BorderMode = BorderMode.REPLICATE,
    tile: Optional[int] = None,
) -> Tensor:
    """Denoise a whole image; the output has the input's height and width.

    The input is padded by 8 pixels per side with the chosen border rule.
    With ``tile`` set, output tiles of at most ``tile``×``tile`` are computed
    from input windows widened by the blocks' halo, matching the untiled
    result up to float rounding. Values are not clamped.
    """
    image = np.asarray(noisy).reshape(np.shape(noisy)[-2:])
    h, w = image.shape
    if h < MIN_SIZE or w < MIN_SIZE:
        raise ShapeError("image size", f">= {MIN_SIZE}x{MIN_SIZE}", (h, w), "denoise_image")

    padded = np.pad(image, BORDER, mode=border.numpy)[np.newaxis, np.newaxis]
    if tile is None or (h <= tile and w <= tile):
        return predict(net, padded)
    if tile < 1:
        raise ValueError(f"Tile size must be >= 1, not {tile}")

    halo = block_halo(net)
    out = np.empty((1, 1, h, w), dtype=net.dtype.numpy)
    for top in range(0, h, tile):
        for left in range(0, w, tile):
            bottom, right = min(top + tile, h), min(left + tile, w)
            r0, c0 = max(top - halo, 0), max(left - halo, 0)
            r1, c1 = min(bottom + halo, h), min(right + halo, w)
            window = padded[:, :, r0 : r1 + 2 * BORDER, c0 : c1 + 2 * BORDER]
            result = predict(net, window)
            out[:, :, top:bottom, left:right] = result[
                :, :, top - r0 : bottom - r0, left - c0 : right - c0
            ]
    logger.debug(f"Denoised {h}x{w} image in {tile}x{tile} tiles with halo {halo}")
    return out

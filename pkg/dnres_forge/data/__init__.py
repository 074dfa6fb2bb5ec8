"""Published reference values: noise grids and the parameter / MAC tables."""
from typing import Dict, Tuple

# Non-blind and blind training grids.
GAUSSIAN_SIGMAS: Tuple[float, ...] = (10, 25, 50, 75)
POISSON_PEAKS: Tuple[float, ...] = (1, 2, 4, 8)
POISSON_GAUSSIAN_SIGMAS: Tuple[float, ...] = (0.1, 0.2, 0.5, 1, 2, 3, 6, 12)
POISSON_GAUSSIAN_PEAK_PER_SIGMA = 10

# Weights-only parameter counts by convolutional depth (3 + 2 × blocks).
DN_RESNET_PARAMS: Dict[int, int] = {
    3: 57_184,
    5: 75_616,
    7: 94_048,
    9: 112_480,
    11: 130_912,
    13: 149_344,
}

# 13-layer networks, MACs at 640×480.
DN_RESNET_13_MACS_BILLIONS = 45.9
DS_DN_RESNET_13_MACS_BILLIONS = 19.6
RESBLOCK_MACS_640X480 = 5_662_310_400

# The published DS-DN-ResNet count is 16 below what the topology adds up to.
DS_DN_RESNET_13_PARAMS_PUBLISHED = 63_728
DS_DN_RESNET_13_PARAMS = 63_744

REFERENCE_SIZE = (480, 640)


def poisson_gaussian_grid():
    """(sigma, peak) pairs of the Poisson-Gaussian grid, peak = 10σ."""
    return [(s, POISSON_GAUSSIAN_PEAK_PER_SIGMA * s) for s in POISSON_GAUSSIAN_SIGMAS]

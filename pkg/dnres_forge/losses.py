"""Training losses with their gradients, Sobel edge maps, and PSNR / SSIM."""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from dnres_forge.nn.tensor import Tensor, check_same_shape

SOBEL_WEIGHT = 0.025
BINARY_WEIGHT = 4.0
BINARY_THRESHOLD = 150.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class EdgeMode(Enum):
    SOBEL_MAGNITUDE = "sobel_magnitude"
    BINARY_MASK = "binary_mask"


class LossKind(Enum):
    MSE = "mse"
    EDGE_A = "edge-a"  # Sobel magnitude
    EDGE_B = "edge-b"  # thresholded Sobel mask


@dataclass(frozen=True)
class EdgeMapSpec:
    mode: EdgeMode = EdgeMode.SOBEL_MAGNITUDE
    w: Optional[float] = None
    threshold: float = BINARY_THRESHOLD

    def __post_init__(self):
        if self.w is None:
            default = SOBEL_WEIGHT if self.mode is EdgeMode.SOBEL_MAGNITUDE else BINARY_WEIGHT
            object.__setattr__(self, "w", default)
        if self.w < 0:
            raise ValueError(f"Edge weight must be >= 0, not {self.w}")

    @property
    def label(self) -> str:
        if self.mode is EdgeMode.SOBEL_MAGNITUDE:
            return f"edge-a(w={self.w:g})"
        return f"edge-b(w={self.w:g}, threshold={self.threshold:g})"


@dataclass(frozen=True)
class LossReport:
    total: float
    mse_term: float
    edge_term: float


def loss_spec(
    kind: LossKind, w: Optional[float] = None, threshold: float = BINARY_THRESHOLD
) -> Optional[EdgeMapSpec]:
    """``None`` means plain MSE."""
    if kind is LossKind.MSE:
        return None
    mode = EdgeMode.SOBEL_MAGNITUDE if kind is LossKind.EDGE_A else EdgeMode.BINARY_MASK
    return EdgeMapSpec(mode, w, threshold)


def mse_loss(pred: Tensor, target: Tensor) -> Tuple[float, Tensor]:
    check_same_shape(pred, target, "mse_loss")
    diff = pred - target
    value = float(np.mean(np.square(diff, dtype=np.float64)))
    grad = (2.0 / diff.size) * diff
    return value, grad.astype(pred.dtype)


def sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    """sqrt(Gx² + Gy²) of a 2-D image with unnormalized 3×3 Sobel kernels and
    replicated borders."""
    plane = np.asarray(plane, dtype=np.float64)
    gx = ndimage.sobel(plane, axis=1, mode="nearest")
    gy = ndimage.sobel(plane, axis=0, mode="nearest")
    return np.hypot(gx, gy)


def sobel_edge_map(clean: Tensor, spec: EdgeMapSpec) -> np.ndarray:
    """Edge map of every (n, c) plane of ``clean``, in float64."""
    clean = np.asarray(clean)
    out = np.empty(clean.shape, dtype=np.float64)
    for index in np.ndindex(*clean.shape[:-2]):
        magnitude = sobel_magnitude(clean[index])
        if spec.mode is EdgeMode.SOBEL_MAGNITUDE:
            out[index] = np.minimum(1.0, magnitude)
        else:
            out[index] = (255.0 * magnitude >= spec.threshold).astype(np.float64)
    return out


def edge_aware_loss(
    pred: Tensor, target: Tensor, spec: EdgeMapSpec
) -> Tuple[LossReport, Tensor]:
    """MSE plus w × mean((target·M − pred·M)²), M the edge map of ``target``.

    M is a constant with respect to ``pred``.
    """
    check_same_shape(pred, target, "edge_aware_loss")
    mse_term, grad = mse_loss(pred, target)
    if spec.w == 0:
        return LossReport(mse_term, mse_term, 0.0), grad

    m2 = np.square(sobel_edge_map(target, spec))
    diff = pred.astype(np.float64) - target
    edge_term = float(np.mean(m2 * np.square(diff)))
    edge_grad = (2.0 * spec.w / diff.size) * m2 * diff
    report = LossReport(mse_term + spec.w * edge_term, mse_term, edge_term)
    return report, (grad + edge_grad).astype(pred.dtype)


def compute_loss(
    pred: Tensor, target: Tensor, spec: Optional[EdgeMapSpec] = None
) -> Tuple[float, Tensor]:
    if spec is None:
        return mse_loss(pred, target)
    report, grad = edge_aware_loss(pred, target, spec)
    return report.total, grad


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """PSNR in dB; identical inputs give ``math.inf``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a - b)))
    if mse == 0:
        return math.inf
    return 10 * math.log10(max_val**2 / mse)


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
    k1: float = SSIM_K1,
    k2: float = SSIM_K2,
    max_val: float = 1.0,
) -> float:
    """Mean SSIM over Gaussian-weighted windows of two single-channel images.

    Local statistics use a Gaussian filter truncated to ``window`` taps with
    reflected borders; values within (window - 1) / 2 of the border are
    dropped before averaging.
    """
    x = np.squeeze(np.asarray(a, dtype=np.float64))
    y = np.squeeze(np.asarray(b, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(f"ssim: shape mismatch {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ValueError(f"ssim: expected a single-channel image, got shape {x.shape}")
    if window < 3 or window % 2 != 1:
        raise ValueError(f"ssim: window must be odd and at least 3, not {window}")
    if min(x.shape) < window:
        raise ValueError(f"ssim: image {x.shape} is smaller than the {window}×{window} window")

    radius = (window - 1) // 2
    truncate = radius / sigma

    def blur(img):
        return ndimage.gaussian_filter(img, sigma, mode="reflect", truncate=truncate)

    ux, uy = blur(x), blur(y)
    vx = blur(x * x) - ux * ux
    vy = blur(y * y) - uy * uy
    vxy = blur(x * y) - ux * uy

    c1 = (k1 * max_val) ** 2
    c2 = (k2 * max_val) ** 2
    numerator = (2 * ux * uy + c1) * (2 * vxy + c2)
    denominator = (ux**2 + uy**2 + c1) * (vx + vy + c2)
    s = numerator / denominator
    return float(s[radius:-radius, radius:-radius].mean())

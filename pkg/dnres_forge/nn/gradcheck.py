"""Central finite-difference verification of analytic gradients.

The checked scalar is ``L = sum(forward(x) * r)`` for a fixed random projection
``r``, so the upstream gradient handed to ``backward`` is ``r`` itself.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np

from dnres_forge.nn.kernels import (
    ConvParams,
    DepthwiseConvParams,
    add,
    add_backward,
    conv2d_backward,
    conv2d_forward,
    depthwise_conv2d_backward,
    depthwise_conv2d_forward,
    relu_backward,
    relu_forward,
)
from dnres_forge.nn.tensor import Tensor

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
# Gradients smaller than this fraction of the tensor's largest gradient are
# compared in absolute rather than relative terms.
FLOOR_FRACTION = 1e-3
INPUT = "input"


class Fragment(Protocol):
    params: Dict[str, np.ndarray]

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        ...

    def backward(self, tape: Any, grad_out: Tensor) -> Tuple[Tensor, Dict[str, np.ndarray]]:
        ...


@dataclass
class GradientReport:
    tolerance: float
    errors: Dict[str, float] = field(default_factory=dict)
    checked: int = 0
    skipped: int = 0  # samples whose perturbation crossed a ReLU kink

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_error < self.tolerance

    def lines(self) -> List[str]:
        rows = [f"{name}: {err:.3e}" for name, err in self.errors.items()]
        verdict = "PASS" if self.passed else "FAIL"
        rows.append(
            f"{verdict}: max relative error {self.max_error:.3e} "
            f"(tolerance {self.tolerance:.0e}, {self.checked} checked, {self.skipped} skipped)"
        )
        return rows


def _relative_error(analytic: float, numeric: float, floor: float) -> float:
    diff = abs(analytic - numeric)
    if diff == 0.0:
        return 0.0
    return diff / max(abs(analytic), abs(numeric), floor)


def _pattern(fragment: Fragment, tape: Any) -> Optional[np.ndarray]:
    relu_inputs = getattr(fragment, "relu_inputs", None)
    if relu_inputs is None:
        return None
    arrays = relu_inputs(tape)
    if not arrays:
        return None
    return np.concatenate([(a > 0).ravel() for a in arrays])


def gradient_check(
    fragment: Fragment,
    x: Tensor,
    tolerance: float = 1e-6,
    h: float = DEFAULT_STEP,
    samples_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    check_input: bool = True,
) -> GradientReport:
    if x.dtype != np.float64:
        raise TypeError(f"Gradient checks run in float64, not {x.dtype}")
    rng = rng if rng is not None else np.random.default_rng(0)

    y, tape = fragment.forward(x)
    r = rng.standard_normal(y.shape)
    grad_x, grads = fragment.backward(tape, r)
    base_pattern = _pattern(fragment, tape)

    def loss(inp: Tensor) -> Tuple[float, Optional[np.ndarray]]:
        out, t = fragment.forward(inp)
        return float(np.sum(out * r)), _pattern(fragment, t)

    report = GradientReport(tolerance)
    targets: List[Tuple[str, np.ndarray, np.ndarray]] = [
        (name, fragment.params[name], grads[name]) for name in fragment.params
    ]
    if check_input:
        x = x.copy()
        targets.append((INPUT, x, grad_x))

    for name, values, analytic in targets:
        size = values.size
        if samples_per_param is None or size <= samples_per_param:
            indices = np.arange(size)
        else:
            indices = np.sort(rng.choice(size, samples_per_param, replace=False))
        floor = FLOOR_FRACTION * float(np.abs(analytic).max())

        if not values.flags.c_contiguous:
            raise ValueError(f"{name} must be C-contiguous to be perturbed in place")
        worst = 0.0
        flat = values.reshape(-1)
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus, plus_pattern = loss(x)
            flat[i] = original - h
            minus, minus_pattern = loss(x)
            flat[i] = original

            if base_pattern is not None and not (
                np.array_equal(plus_pattern, base_pattern)
                and np.array_equal(minus_pattern, base_pattern)
            ):
                report.skipped += 1
                continue

            numeric = (plus - minus) / (2 * h)
            worst = max(worst, _relative_error(float(analytic.flat[i]), numeric, floor))
            report.checked += 1
        report.errors[name] = worst

    logger.debug(f"Gradient check: {report.lines()[-1]}")
    return report


class ConvFragment:
    def __init__(self, p: ConvParams):
        self.p = p
        self.params = {"weight": p.weights, "bias": p.bias}

    def forward(self, x):
        return conv2d_forward(x, self.p), x

    def backward(self, tape, grad_out):
        gx, gw, gb = conv2d_backward(grad_out, tape, self.p)
        return gx, {"weight": gw, "bias": gb}


class DepthwiseFragment:
    def __init__(self, p: DepthwiseConvParams):
        self.p = p
        self.params = {"weight": p.weights, "bias": p.bias}

    def forward(self, x):
        return depthwise_conv2d_forward(x, self.p), x

    def backward(self, tape, grad_out):
        gx, gw, gb = depthwise_conv2d_backward(grad_out, tape, self.p)
        return gx, {"weight": gw, "bias": gb}


class ReluFragment:
    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}

    def forward(self, x):
        return relu_forward(x), x

    def backward(self, tape, grad_out):
        return relu_backward(grad_out, tape), {}

    @staticmethod
    def relu_inputs(tape):
        return [tape]


class AddFragment:
    """``x + other``; ``other`` is exposed as a parameter so both operands are checked."""

    def __init__(self, other: Tensor):
        self.params = {"other": other}

    def forward(self, x):
        return add(x, self.params["other"]), None

    def backward(self, tape, grad_out):
        grad_x, grad_other = add_backward(grad_out)
        return grad_x, {"other": grad_other}

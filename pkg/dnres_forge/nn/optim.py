import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from dnres_forge.errors import DivergenceError, ShapeError

logger = logging.getLogger(__name__)

# "a fixed learning rate 0.0001 for all layers without any decay"
DEFAULT_LEARNING_RATE = 1e-4


class OptimizerKind(Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass
class OptimizerState:
    kind: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def fresh(self) -> "OptimizerState":
        """Same hyperparameters, zeroed moments and step counter."""
        return OptimizerState(
            self.kind, self.learning_rate, self.beta1, self.beta2, self.eps
        )


def optimizer_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """Update ``params`` in place. Nothing is touched if any gradient is non-finite."""
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter {name}")
        if g.shape != params[name].shape:
            raise ShapeError("gradient shape", params[name].shape, g.shape, name)
        if not np.isfinite(g).all():
            raise DivergenceError(f"Non-finite gradient for {name}")

    state.step += 1

    if state.kind is OptimizerKind.SGD:
        for name, g in grads.items():
            params[name] -= (state.learning_rate * g).astype(params[name].dtype)
        return params, state

    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= update.astype(p.dtype)
    return params, state

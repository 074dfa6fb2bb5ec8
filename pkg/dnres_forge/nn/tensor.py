"""Tensors are plain 4-D numpy arrays laid out (n, c, h, w) in row-major order."""
from enum import Enum
from typing import Tuple

import numpy as np

from dnres_forge.errors import ShapeError

Tensor = np.ndarray

AXES = ("batch", "channels", "rows", "cols")


class DType(Enum):
    F32 = "f32"
    F64 = "f64"

    @property
    def numpy(self) -> np.dtype:
        return np.dtype(np.float32 if self is DType.F32 else np.float64)

    @classmethod
    def of(cls, x: np.ndarray) -> "DType":
        if x.dtype == np.float32:
            return cls.F32
        if x.dtype == np.float64:
            return cls.F64
        raise TypeError(f"Unsupported tensor dtype {x.dtype}; use float32 or float64")


# Training and inference run in f32; gradient checks run in f64.
DEFAULT_DTYPE = DType.F32
CHECK_DTYPE = DType.F64


def as_tensor(x, dtype: DType = DEFAULT_DTYPE) -> Tensor:
    """Promote 2-D (h, w) or 3-D (c, h, w) data to a contiguous 4-D tensor."""
    arr = np.asarray(x, dtype=dtype.numpy)
    while arr.ndim < 4:
        arr = arr[np.newaxis]
    if arr.ndim != 4:
        raise ShapeError("rank", 4, arr.ndim)
    return np.ascontiguousarray(arr)


def check_tensor(x: Tensor, where: str = "") -> Tuple[int, int, int, int]:
    if not isinstance(x, np.ndarray):
        raise TypeError(f"{where or 'tensor'}: expected numpy.ndarray, got {type(x)}")
    if x.ndim != 4:
        raise ShapeError("rank", 4, x.ndim, where)
    DType.of(x)
    n, c, h, w = x.shape
    return n, c, h, w


def check_same_shape(a: Tensor, b: Tensor, where: str = "") -> None:
    check_tensor(a, where)
    check_tensor(b, where)
    for axis, x, y in zip(AXES, a.shape, b.shape):
        if x != y:
            raise ShapeError(axis, x, y, where)


def all_finite(*xs: np.ndarray) -> bool:
    return all(bool(np.isfinite(x).all()) for x in xs)

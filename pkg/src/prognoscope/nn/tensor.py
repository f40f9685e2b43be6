"""Dense tensor type used by every layer, model, and optimizer.

A Tensor is a thin, validated wrapper around a contiguous numpy array.
float32 is the working precision for training; float64 exists for
finite-difference gradient verification only.
"""
from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError

DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64


class Tensor:
    """N-dimensional array of finite real values, row-major.

    Invariants enforced at construction (and therefore after every public
    operation that returns a Tensor): the flat data length equals the
    product of the shape, and every stored value is finite.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains NaN or Inf")
        self.data = arr

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, shape, dtype=DEFAULT_DTYPE) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=dtype))

    @classmethod
    def full(cls, shape, value, dtype=DEFAULT_DTYPE) -> "Tensor":
        return cls(np.full(shape, value, dtype=dtype))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Wrap an array known to be finite and contiguous (internal use)."""
        t = object.__new__(cls)
        t.data = arr
        return t

    # -- views --------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def astype(self, dtype) -> "Tensor":
        return Tensor._wrap(np.ascontiguousarray(self.data, dtype=dtype))

    def copy(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"


def as_array(x, dtype=None) -> np.ndarray:
    """Accept a Tensor or array-like; return the backing ndarray."""
    if isinstance(x, Tensor):
        arr = x.data
    else:
        arr = np.asarray(x)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


def checked(arr: np.ndarray) -> Tensor:
    """Wrap an op result, re-validating finiteness (the public-op contract)."""
    if not np.all(np.isfinite(arr)):
        raise NumericError("operation produced NaN or Inf")
    return Tensor._wrap(np.ascontiguousarray(arr))


def require_shape(arr: np.ndarray, ndim: int, what: str) -> None:
    if arr.ndim != ndim:
        raise ShapeError(f"{what}: expected {ndim}-d input, got shape {arr.shape}")
    if any(s <= 0 for s in arr.shape):
        raise ShapeError(f"{what}: non-positive dimension in {arr.shape}")

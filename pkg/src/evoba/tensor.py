"""Image tensors, single-pixel writes, and the perturbation norms (L0/L2/Linf).

Images live in [0, 1]^(h*w*c) with a fixed row-major (height, width, channel)
layout. Tensors are immutable: every mutation-like operation returns a copy,
so a parent image always survives the generation of its children.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolationError


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ContractViolationError(
                    f"{name} must be a positive integer, got {v!r}"
                )
            object.__setattr__(self, name, int(v))

    @property
    def element_count(self) -> int:
        return self.height * self.width * self.channels

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass(frozen=True)
class PixelCoordinate:
    row: int
    col: int
    channel: int

    def in_shape(self, shape: TensorShape) -> bool:
        return (
            0 <= self.row < shape.height
            and 0 <= self.col < shape.width
            and 0 <= self.channel < shape.channels
        )


class ImageTensor:
    """An h x w x c image with float64 pixel values in [0, 1].

    The backing array is marked read-only; share instances freely across
    threads. Use :func:`apply_write` / :func:`write_many` to derive
    modified copies.
    """

    __slots__ = ("_values", "shape")

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim != 3:
            raise ContractViolationError(
                f"image values must be 3-dimensional (h, w, c), got ndim={arr.ndim}"
            )
        if arr.size == 0:
            raise ContractViolationError("image must have at least one element")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ContractViolationError(
                f"pixel values must lie in [0, 1], got range [{lo}, {hi}]"
            )
        arr.setflags(write=False)
        self._values = arr
        self.shape = TensorShape(*arr.shape)

    @classmethod
    def from_flat(cls, values, shape: TensorShape) -> "ImageTensor":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != shape.element_count:
            raise ContractViolationError(
                f"expected {shape.element_count} values for shape "
                f"{shape.as_tuple()}, got {arr.size}"
            )
        return cls(arr.reshape(shape.as_tuple()))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "ImageTensor":
        # Fast path for arrays already validated by construction.
        obj = object.__new__(cls)
        arr.setflags(write=False)
        obj._values = arr
        obj.shape = TensorShape(*arr.shape)
        return obj

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def flat(self) -> np.ndarray:
        return self._values.reshape(-1)

    def tobytes(self) -> bytes:
        return self._values.tobytes()

    def __getitem__(self, coord: PixelCoordinate) -> float:
        return float(self._values[coord.row, coord.col, coord.channel])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self._values, other._values
        )

    def __hash__(self):
        return hash((self.shape, self.tobytes()))

    def __repr__(self):
        return f"ImageTensor(shape={self.shape.as_tuple()})"


def _require_same_shape(a: ImageTensor, b: ImageTensor, op: str) -> None:
    if a.shape != b.shape:
        raise ContractViolationError(
            f"{op} requires matching shapes, got {a.shape.as_tuple()} "
            f"and {b.shape.as_tuple()}"
        )


def l0_distance(a: ImageTensor, b: ImageTensor) -> int:
    """Number of entries that differ exactly (no tolerance).

    Perturbations are explicit writes, never arithmetic drift, so exact
    inequality is the correct count. Counted per channel entry: changing
    all channels of one spatial position of a 3-channel image costs 3.
    """
    _require_same_shape(a, b, "l0_distance")
    return int(np.count_nonzero(a.values != b.values))


def l2_distance(a: ImageTensor, b: ImageTensor) -> float:
    """Euclidean norm of the perturbation b - a."""
    _require_same_shape(a, b, "l2_distance")
    d = a.values - b.values
    return float(np.sqrt(np.sum(d * d)))


def linf_distance(a: ImageTensor, b: ImageTensor) -> float:
    """Largest absolute per-entry difference."""
    _require_same_shape(a, b, "linf_distance")
    return float(np.max(np.abs(a.values - b.values)))


def _check_write(img: ImageTensor, coord: PixelCoordinate, value: float) -> None:
    if not coord.in_shape(img.shape):
        raise ContractViolationError(
            f"coordinate {coord} outside image shape {img.shape.as_tuple()}"
        )
    if not (0.0 <= value <= 1.0):
        raise ContractViolationError(f"pixel value must be in [0, 1], got {value}")


def apply_write(img: ImageTensor, coord: PixelCoordinate, value: float) -> ImageTensor:
    """Copy of img with exactly one entry replaced; img itself is untouched."""
    _check_write(img, coord, value)
    out = img.values.copy()
    out[coord.row, coord.col, coord.channel] = value
    return ImageTensor._wrap(out)


def write_many(
    img: ImageTensor,
    coords: Sequence[PixelCoordinate],
    values: Iterable[float],
) -> ImageTensor:
    """Copy of img with one entry written per coordinate, in order.

    Equivalent to chaining apply_write but with a single copy. Later writes
    to a repeated coordinate win.
    """
    values = list(values)
    if len(values) != len(coords):
        raise ContractViolationError(
            f"got {len(coords)} coordinates but {len(values)} values"
        )
    out = img.values.copy()
    for coord, value in zip(coords, values):
        _check_write(img, coord, value)
        out[coord.row, coord.col, coord.channel] = value
    return ImageTensor._wrap(out)

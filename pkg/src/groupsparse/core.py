"""Core value types shared by every module.

All types are validated once at construction and immutable afterwards
(the wrapped arrays are marked read-only), so they can be shared freely
between threads.  Intensities live on the 0-255 scale throughout; the
regularization constants and PSNR are calibrated for that scale, and
everything internal is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """A value type was constructed from inconsistent or non-finite data."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


def _first_nonfinite(arr: np.ndarray):
    bad = ~np.isfinite(arr)
    if bad.any():
        return tuple(int(i) for i in np.argwhere(bad)[0])
    return None


@dataclass(frozen=True)
class GrayImage:
    """A grayscale image: ``height`` x ``width`` float64 intensities.

    ``data`` may be passed as a 2-D array or as a flat row-major vector;
    it is stored as a read-only ``(height, width)`` array.
    """

    height: int
    width: int
    data: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError(
                f"image dimensions must be positive, got {self.height}x{self.width}")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            if arr.size != self.height * self.width:
                raise ValidationError(
                    f"dimension mismatch: {self.height}x{self.width} image needs "
                    f"{self.height * self.width} values, got {arr.size}")
            arr = arr.reshape(self.height, self.width)
        elif arr.shape != (self.height, self.width):
            raise ValidationError(
                f"dimension mismatch: expected shape "
                f"({self.height}, {self.width}), got {arr.shape}")
        idx = _first_nonfinite(arr)
        if idx is not None:
            raise ValidationError(f"non-finite intensity at index {idx}")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"image array must be 2-D, got shape {arr.shape}")
        return cls(arr.shape[0], arr.shape[1], arr)

    @property
    def shape(self):
        return (self.height, self.width)


def validate_image(img: GrayImage) -> None:
    """Re-check the :class:`GrayImage` invariants, raising on violation.

    Construction already enforces them; this is the explicit check used
    at trust boundaries (e.g. after file input).
    """
    if not isinstance(img, GrayImage):
        raise ValidationError(f"expected GrayImage, got {type(img).__name__}")
    arr = np.asarray(img.data)
    if arr.shape != (img.height, img.width):
        raise ValidationError(
            f"dimension mismatch: expected shape ({img.height}, {img.width}), "
            f"got {arr.shape}")
    idx = _first_nonfinite(arr)
    if idx is not None:
        raise ValidationError(f"non-finite intensity at index {idx}")


@dataclass(frozen=True)
class PixelMask:
    """Boolean observation mask; ``kept[i, j]`` is True for observed pixels."""

    height: int
    width: int
    kept: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.kept)
        if arr.dtype != np.bool_:
            raise ValidationError("mask must be boolean")
        if arr.shape != (self.height, self.width):
            raise ValidationError(
                f"dimension mismatch: expected mask shape ({self.height}, "
                f"{self.width}), got {arr.shape}")
        object.__setattr__(self, "kept", _freeze(arr))

    @classmethod
    def from_array(cls, arr) -> "PixelMask":
        arr = np.asarray(arr, dtype=bool)
        return cls(arr.shape[0], arr.shape[1], arr)

    @property
    def observed_fraction(self) -> float:
        return float(np.count_nonzero(self.kept)) / (self.height * self.width)

    @classmethod
    def all_kept(cls, height: int, width: int) -> "PixelMask":
        return cls(height, width, np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class PatchGroup:
    """A stack of similar patches: ``data`` is d x m, one vectorized patch
    per column (row-major vectorization), ``coords`` the m (row, col) patch
    origins.  Column 0 is the reference patch.
    """

    data: np.ndarray
    coords: np.ndarray
    ref_index: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError(f"group data must be 2-D, got shape {data.shape}")
        idx = _first_nonfinite(data)
        if idx is not None:
            raise ValidationError(f"non-finite group value at index {idx}")
        d = data.shape[0]
        p = math.isqrt(d)
        if p * p != d:
            raise ValidationError(f"group row count {d} is not a square patch size")
        coords = np.asarray(self.coords, dtype=np.int64)
        if coords.shape != (data.shape[1], 2):
            raise ValidationError(
                f"coords must have shape ({data.shape[1]}, 2), got {coords.shape}")
        if not 0 <= self.ref_index < data.shape[1]:
            raise ValidationError(f"ref_index {self.ref_index} out of range")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "coords", _freeze(coords))

    @property
    def patch_size(self) -> int:
        return math.isqrt(self.data.shape[0])

    @property
    def match_count(self) -> int:
        return self.data.shape[1]

    def check_bounds(self, height: int, width: int) -> None:
        p = self.patch_size
        r, c = self.coords[:, 0], self.coords[:, 1]
        bad = (r < 0) | (c < 0) | (r > height - p) | (c > width - p)
        if bad.any():
            i = int(np.argwhere(bad)[0][0])
            raise ValidationError(
                f"patch origin {tuple(self.coords[i])} leaves a {p}x{p} patch "
                f"outside a {height}x{width} image")


_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class GroupDictionary:
    """Per-group rank-one atom basis stored as its SVD factors.

    Atom j is ``left[:, j] @ right[:, j].T``; the atoms are orthonormal
    under the trace inner product because ``left`` and ``right`` have
    orthonormal columns.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        if left.ndim != 2 or right.ndim != 2 or left.shape[1] != right.shape[1]:
            raise ValidationError(
                f"factor shapes disagree: left {left.shape}, right {right.shape}")
        n1 = left.shape[1]
        for name, f in (("left", left), ("right", right)):
            gram = f.T @ f
            if not np.allclose(gram, np.eye(n1), atol=_ORTHO_TOL):
                raise ValidationError(f"{name} factor columns are not orthonormal")
        object.__setattr__(self, "left", _freeze(left))
        object.__setattr__(self, "right", _freeze(right))

    @property
    def n_atoms(self) -> int:
        return self.left.shape[1]

    def atom(self, j: int) -> np.ndarray:
        return np.outer(self.left[:, j], self.right[:, j])


@dataclass(frozen=True)
class GroupCode:
    """Coefficient vector on a group dictionary's rank-one atoms."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError(f"code must be 1-D, got shape {arr.shape}")
        idx = _first_nonfinite(arr)
        if idx is not None:
            raise ValidationError(f"non-finite coefficient at index {idx}")
        object.__setattr__(self, "coeffs", _freeze(arr))

    def __len__(self):
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class ShrinkageSpec:
    """Which member of the shrinkage family to apply.

    ``p`` in (0, 1] selects the exponent (p=1 is soft-thresholding),
    ``weighted`` selects per-coefficient weights 1/(|coeff| + eps_weight),
    ``tau`` is a base threshold scale for call sites that do not supply
    one, and ``gst_iters`` the fixed iteration count of the thresholding
    recursion.
    """

    p: float
    weighted: bool = False
    tau: float = 0.0
    eps_weight: float = 0.35
    gst_iters: int = 2

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValidationError(f"p must lie in (0, 1], got {self.p}")
        if self.tau < 0:
            raise ValidationError(f"tau must be nonnegative, got {self.tau}")
        if self.eps_weight <= 0:
            raise ValidationError(
                f"eps_weight must be positive, got {self.eps_weight}")
        if self.gst_iters < 1:
            raise ValidationError(f"gst_iters must be >= 1, got {self.gst_iters}")

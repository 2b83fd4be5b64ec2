"""Degradation operators and the PSNR metric.

Two operator families: a 0/1 pixel mask (inpainting; its own adjoint) and
block compressive sensing, where one seeded Gaussian matrix with entries
N(0, 1/M) measures every 32x32 block so that block energy is preserved in
expectation.  Randomness always comes from the 64-bit PCG64 generator with
an explicit seed, so identical parameters give bit-identical operators.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import GrayImage, PixelMask, ValidationError

MEAS_MAGIC = b"GSCM"
MEAS_VERSION = 1
_HEADER = struct.Struct("<4sHIIHHQ")  # magic, version, h, w, block, M, seed


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def apply_mask(img: GrayImage, mask: PixelMask) -> GrayImage:
    """Keep observed pixels, zero the rest.  Diagonal, so also the adjoint."""
    if mask.height != img.height or mask.width != img.width:
        raise ValidationError(
            f"mask {mask.height}x{mask.width} does not match image "
            f"{img.height}x{img.width}")
    return GrayImage.from_array(np.where(mask.kept, img.data, 0.0))


def random_mask(height: int, width: int, missing_fraction: float,
                seed: int) -> PixelMask:
    """Kill exactly round(missing_fraction * h * w) pixels, chosen by a
    seeded uniform draw without replacement."""
    if not 0.0 <= missing_fraction < 1.0:
        raise ValidationError(
            f"missing_fraction must lie in [0, 1), got {missing_fraction}")
    n = height * width
    n_killed = int(round(missing_fraction * n))
    kept = np.ones(n, dtype=bool)
    if n_killed:
        killed = _rng(seed).permutation(n)[:n_killed]
        kept[killed] = False
    return PixelMask(height, width, kept.reshape(height, width))


@dataclass(frozen=True)
class BlockCsOp:
    """Block Gaussian projection: the same M x block^2 matrix measures every
    block (partial border blocks are zero-padded)."""

    block: int
    rows: int
    seed: int
    matrix: np.ndarray = None

    def __post_init__(self):
        if self.block < 1:
            raise ValidationError(f"block must be positive, got {self.block}")
        if self.rows < 1:
            raise ValidationError(f"operator needs at least one row, got {self.rows}")
        d = self.block * self.block
        if self.matrix is None:
            mat = _rng(self.seed).standard_normal((self.rows, d)) / math.sqrt(self.rows)
        else:
            mat = np.asarray(self.matrix, dtype=np.float64)
            if mat.shape != (self.rows, d):
                raise ValidationError(
                    f"matrix shape {mat.shape} does not match ({self.rows}, {d})")
        mat = np.ascontiguousarray(mat)
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_ratio(cls, ratio: float, seed: int, block: int = 32) -> "BlockCsOp":
        if not 0.0 < ratio <= 1.0:
            raise ValidationError(f"ratio must lie in (0, 1], got {ratio}")
        return cls(block=block, rows=int(round(ratio * block * block)), seed=seed)

    @property
    def ratio(self) -> float:
        return self.rows / (self.block * self.block)

    def gram_spectral_norm(self) -> float:
        """Largest eigenvalue of matrix^T matrix (governs gradient steps)."""
        top = np.linalg.svd(self.matrix, compute_uv=False)[0]
        return float(top * top)


@dataclass(frozen=True)
class Measurements:
    """Per-block measurement vectors in block scan order plus the operator
    descriptor needed to rebuild the projection."""

    data: np.ndarray  # (n_blocks, rows)
    height: int
    width: int
    block: int
    rows: int
    seed: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        nb = _block_grid(self.height, self.width, self.block)
        expected = nb[0] * nb[1]
        if data.shape != (expected, self.rows):
            raise ValidationError(
                f"measurement data shape {data.shape} does not match "
                f"{expected} blocks x {self.rows} rows")
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    def operator(self) -> BlockCsOp:
        return BlockCsOp(block=self.block, rows=self.rows, seed=self.seed)


def _block_grid(height: int, width: int, block: int):
    return (math.ceil(height / block), math.ceil(width / block))


def image_to_blocks(arr: np.ndarray, block: int) -> np.ndarray:
    """(n_blocks, block^2) matrix of zero-padded blocks in scan order,
    each block vectorized row-major."""
    h, w = arr.shape
    bh, bw = _block_grid(h, w, block)
    padded = np.zeros((bh * block, bw * block))
    padded[:h, :w] = arr
    blocks = padded.reshape(bh, block, bw, block).transpose(0, 2, 1, 3)
    return blocks.reshape(bh * bw, block * block)


def blocks_to_image(vecs: np.ndarray, height: int, width: int,
                    block: int) -> np.ndarray:
    """Inverse of :func:`image_to_blocks`, cropping the padding."""
    bh, bw = _block_grid(height, width, block)
    blocks = vecs.reshape(bh, bw, block, block).transpose(0, 2, 1, 3)
    return blocks.reshape(bh * block, bw * block)[:height, :width].copy()


def cs_measure(img: GrayImage, op: BlockCsOp) -> Measurements:
    """Project every block: y_b = matrix @ vec(block)."""
    vecs = image_to_blocks(np.asarray(img.data), op.block)
    data = vecs @ op.matrix.T
    return Measurements(data=data, height=img.height, width=img.width,
                        block=op.block, rows=op.rows, seed=op.seed)


def cs_adjoint(meas: Measurements, op: BlockCsOp) -> GrayImage:
    """Assemble matrix^T @ y_b per block back into an image."""
    if op.block != meas.block or op.rows != meas.rows:
        raise ValidationError("operator does not match the measurements")
    vecs = meas.data @ op.matrix
    return GrayImage.from_array(
        blocks_to_image(vecs, meas.height, meas.width, meas.block))


def psnr(x: GrayImage, ref: GrayImage) -> float:
    """10 log10(255^2 / MSE) on the 0-255 scale; +inf for identical images."""
    if x.shape != ref.shape:
        raise ValidationError(
            f"image shapes differ: {x.shape} vs {ref.shape}")
    mse = float(np.mean((np.asarray(x.data) - np.asarray(ref.data)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def save_measurements(meas: Measurements, path) -> None:
    """Binary little-endian file: header (magic, version, h, w, block, M,
    seed) followed by the per-block float64 vectors in scan order."""
    header = _HEADER.pack(MEAS_MAGIC, MEAS_VERSION, meas.height, meas.width,
                          meas.block, meas.rows, meas.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meas.data.astype("<f8").tobytes())


def load_measurements(path) -> Measurements:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValidationError(f"{path}: truncated measurements header")
        magic, version, h, w, block, rows, seed = _HEADER.unpack(raw)
        if magic != MEAS_MAGIC:
            raise ValidationError(f"{path}: not a measurements file")
        if version != MEAS_VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        nb = _block_grid(h, w, block)
        body = np.frombuffer(fh.read(), dtype="<f8")
    expected = nb[0] * nb[1] * rows
    if body.size != expected:
        raise ValidationError(
            f"{path}: expected {expected} measurement values, got {body.size}")
    return Measurements(data=body.reshape(nb[0] * nb[1], rows).copy(),
                        height=h, width=w, block=block, rows=rows, seed=seed)

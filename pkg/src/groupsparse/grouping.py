"""Overlapping-patch extraction, similarity grouping and aggregation.

Reference patches are laid on a stride grid with extra rows/columns forced
at the right and bottom borders so every pixel is covered.  For each
reference, candidate patch origins form a window of ``window x window``
positions centered on the reference origin, shifted (never shrunk) at the
image borders so every reference sees the same number of candidates
whenever the origin grid is large enough.  The m nearest candidates by
squared Euclidean distance are kept; ties break in row-major scan order
and the reference itself is always column 0.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import GrayImage, PatchGroup, ValidationError


@dataclass(frozen=True)
class GroupingConfig:
    patch_size: int
    match_count: int
    window: int
    stride: int = 4

    def __post_init__(self):
        if self.patch_size < 2:
            raise ValidationError(f"patch_size must be >= 2, got {self.patch_size}")
        if self.match_count < 1:
            raise ValidationError(f"match_count must be >= 1, got {self.match_count}")
        if self.window < self.patch_size:
            raise ValidationError(
                f"window ({self.window}) must be >= patch_size ({self.patch_size})")
        if self.stride < 1:
            raise ValidationError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True)
class GroupLayout:
    """Patch coordinates of every group: ``coords[i, j]`` is the (row, col)
    origin of member j of group i; member 0 is the reference."""

    patch_size: int
    coords: np.ndarray  # (n_groups, m, 2) int64

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValidationError(f"coords must be (n, m, 2), got {coords.shape}")
        object.__setattr__(self, "coords", coords)

    @property
    def n_groups(self) -> int:
        return self.coords.shape[0]

    @property
    def match_count(self) -> int:
        return self.coords.shape[1]


def reference_origins(extent: int, patch_size: int, stride: int) -> np.ndarray:
    """1-D reference grid 0, stride, 2*stride, ... plus the final origin
    ``extent - patch_size`` so patches tile to the border."""
    last = extent - patch_size
    if last < 0:
        raise ValidationError(
            f"image extent {extent} smaller than patch size {patch_size}")
    origins = list(range(0, last + 1, stride))
    if origins[-1] != last:
        origins.append(last)
    return np.asarray(origins, dtype=np.int64)


def _patch_stack(arr: np.ndarray, patch: int) -> np.ndarray:
    """(H-p+1, W-p+1, p*p) array of row-major vectorized patches."""
    view = sliding_window_view(arr, (patch, patch))
    return view.reshape(view.shape[0], view.shape[1], patch * patch)


def _window_start(ref: int, n_origins: int, window: int) -> int:
    span = min(window, n_origins)
    start = ref - (window - 1) // 2
    return int(np.clip(start, 0, n_origins - span))


def _match_one(patches, ref_r, ref_c, cfg):
    n_rows, n_cols = patches.shape[:2]
    span_r = min(cfg.window, n_rows)
    span_c = min(cfg.window, n_cols)
    r0 = _window_start(ref_r, n_rows, cfg.window)
    c0 = _window_start(ref_c, n_cols, cfg.window)
    cand = patches[r0:r0 + span_r, c0:c0 + span_c].reshape(span_r * span_c, -1)
    ref_patch = patches[ref_r, ref_c]
    diff = cand - ref_patch
    dist = np.einsum("ij,ij->i", diff, diff)

    n_cand = dist.shape[0]
    if cfg.match_count > n_cand:
        raise ValidationError(
            f"match_count {cfg.match_count} exceeds the {n_cand} candidates "
            f"in a {cfg.window}x{cfg.window} window")
    scan = np.arange(n_cand)
    ref_flat = (ref_r - r0) * span_c + (ref_c - c0)
    dist[ref_flat] = np.inf  # reference prepended separately
    order = np.lexsort((scan, dist))[: cfg.match_count - 1]
    rows = r0 + order // span_c
    cols = c0 + order % span_c
    coords = np.empty((cfg.match_count, 2), dtype=np.int64)
    coords[0] = (ref_r, ref_c)
    coords[1:, 0] = rows
    coords[1:, 1] = cols
    return coords


def match_layout(img: GrayImage, cfg: GroupingConfig, threads: int = 1) -> GroupLayout:
    """Block-match every reference patch; deterministic for any thread count."""
    arr = np.asarray(img.data)
    if img.height < cfg.patch_size or img.width < cfg.patch_size:
        raise ValidationError(
            f"image {img.height}x{img.width} smaller than patch "
            f"{cfg.patch_size}x{cfg.patch_size}")
    patches = _patch_stack(arr, cfg.patch_size)
    rows = reference_origins(img.height, cfg.patch_size, cfg.stride)
    cols = reference_origins(img.width, cfg.patch_size, cfg.stride)
    refs = [(int(r), int(c)) for r in rows for c in cols]

    coords = np.empty((len(refs), cfg.match_count, 2), dtype=np.int64)

    def run(i):
        coords[i] = _match_one(patches, refs[i][0], refs[i][1], cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(len(refs))))
    else:
        for i in range(len(refs)):
            run(i)
    return GroupLayout(cfg.patch_size, coords)


def gather_groups(img: GrayImage, layout: GroupLayout) -> np.ndarray:
    """(n_groups, d, m) array of group data at the layout's coordinates."""
    patches = _patch_stack(np.asarray(img.data), layout.patch_size)
    data = patches[layout.coords[..., 0], layout.coords[..., 1]]  # (n, m, d)
    return np.transpose(data, (0, 2, 1)).copy()


def extract_groups(img: GrayImage, cfg: GroupingConfig,
                   threads: int = 1) -> list[PatchGroup]:
    """One group per reference patch, columns ordered by ascending squared
    distance to the reference (reference first)."""
    layout = match_layout(img, cfg, threads=threads)
    data = gather_groups(img, layout)
    return [PatchGroup(data[i], layout.coords[i]) for i in range(layout.n_groups)]


def pixel_indices(coords: np.ndarray, patch_size: int, width: int) -> np.ndarray:
    """Flat pixel indices covered by each patch: coords (..., 2) ->
    (..., d) row-major indices."""
    dr = np.arange(patch_size, dtype=np.int64)
    offsets = (dr[:, None] * width + dr[None, :]).ravel()
    base = coords[..., 0] * width + coords[..., 1]
    return base[..., None] + offsets


def coverage_counts(layout: GroupLayout, height: int, width: int) -> np.ndarray:
    idx = pixel_indices(layout.coords, layout.patch_size, width)
    return np.bincount(idx.ravel(), minlength=height * width)


def _coverage_mean(idx: np.ndarray, values: np.ndarray, n_pixels: int) -> np.ndarray:
    counts = np.bincount(idx, minlength=n_pixels)
    if (counts == 0).any():
        missing = int(np.argwhere(counts == 0)[0][0])
        raise ValidationError(
            f"pixel {missing} is covered by no patch; layout does not tile "
            f"the image")
    total = np.bincount(idx, weights=values, minlength=n_pixels)
    mean = total / counts
    # One refinement pass makes the per-pixel mean exact to the ulp even for
    # long accumulations (residuals of equal contributions cancel exactly).
    resid = np.bincount(idx, weights=values - mean[idx], minlength=n_pixels)
    return mean + resid / counts


def aggregate_estimates(coords: np.ndarray, estimates: np.ndarray,
                        patch_size: int, height: int, width: int) -> np.ndarray:
    """Average per-patch estimates back into an image.

    ``coords`` is (n, m, 2), ``estimates`` (n, d, m) with the same column
    order; every pixel gets the plain mean of all patch values covering it.
    """
    if estimates.shape[1] != patch_size * patch_size:
        raise ValidationError(
            f"estimate rows {estimates.shape[1]} do not match patch size "
            f"{patch_size}")
    if estimates.shape[0] != coords.shape[0] or estimates.shape[2] != coords.shape[1]:
        raise ValidationError(
            f"estimates shape {estimates.shape} does not align with coords "
            f"{coords.shape}")
    idx = pixel_indices(coords, patch_size, width)  # (n, m, d)
    vals = np.transpose(estimates, (0, 2, 1))       # (n, m, d)
    mean = _coverage_mean(idx.ravel(), vals.ravel(), height * width)
    return mean.reshape(height, width)


def aggregate(groups: list[PatchGroup], estimates, height: int,
              width: int) -> GrayImage:
    """Aggregate per-group patch estimates into the full image."""
    if len(groups) != len(estimates):
        raise ValidationError(
            f"{len(groups)} groups but {len(estimates)} estimate matrices")
    if not groups:
        raise ValidationError("cannot aggregate an empty group list")
    patch = groups[0].patch_size
    m = groups[0].match_count
    coords = np.empty((len(groups), m, 2), dtype=np.int64)
    est = np.empty((len(groups), patch * patch, m), dtype=np.float64)
    for i, (g, e) in enumerate(zip(groups, estimates)):
        e = np.asarray(e, dtype=np.float64)
        if e.shape != g.data.shape:
            raise ValidationError(
                f"estimate {i} has shape {e.shape}, group data {g.data.shape}")
        g.check_bounds(height, width)
        coords[i] = g.coords
        est[i] = e
    return GrayImage.from_array(
        aggregate_estimates(coords, est, patch, height, width))

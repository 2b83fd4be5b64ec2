"""Restoration solvers.

The main solver is an ADMM splitting of
    min_A 0.5*||Y - H D A||^2 + lambda*||W A||_p
into a fidelity update of the auxiliary image Z (closed form for pixel
masks, one gradient step for block CS), a per-group shrinkage update of
the codes on freshly learned SVD dictionaries, and a multiplier update.
Groups are re-matched on L = Z - b every outer iteration.  An iterative
shrinkage/thresholding solver without the multiplier is provided for
solver comparisons, and a statistical check relating image-domain and
group-domain squared errors supports the per-group threshold schedule.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (GrayImage, GroupCode, PixelMask, ShrinkageSpec,
                   ValidationError)
from .dictionary import decode, learn_adaptive, learn_pca
from .grouping import (GroupingConfig, GroupLayout, aggregate,
                       aggregate_estimates, extract_groups, gather_groups,
                       match_layout)
from .operators import (BlockCsOp, Measurements, cs_adjoint, image_to_blocks,
                        blocks_to_image, psnr)
from .presets import Preset
from .prox import code_weights, gst, shrink_code

_LAM_NUMER = 2.0 * math.sqrt(2.0)


class DivergenceError(RuntimeError):
    """The solver state became non-finite."""


@dataclass(frozen=True)
class RestoreConfig:
    grouping: GroupingConfig
    spec: ShrinkageSpec
    rho: float
    lam: float | None = None          # None: adaptive per-group schedule
    sigma: float = math.sqrt(2.0)
    eps_var: float = 0.3
    eta: float | None = None          # CS gradient step; None: 1/(bound+rho)
    max_iters: int = 120
    stop: str = "relchange"           # "relchange" | "oracle"
    rel_tol: float = 1e-4
    dict_mode: str = "svd"            # "svd" | "pca"

    def __post_init__(self):
        if self.rho <= 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")
        if self.lam is not None and self.lam < 0:
            raise ValidationError(f"lam must be nonnegative, got {self.lam}")
        if self.sigma <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.eps_var <= 0:
            raise ValidationError(f"eps_var must be positive, got {self.eps_var}")
        if self.eta is not None and self.eta <= 0:
            raise ValidationError(f"eta must be positive, got {self.eta}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.stop not in ("relchange", "oracle"):
            raise ValidationError(f"unknown stop rule '{self.stop}'")
        if self.rel_tol < 0:
            raise ValidationError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.dict_mode not in ("svd", "pca"):
            raise ValidationError(f"unknown dict_mode '{self.dict_mode}'")

    @classmethod
    def from_preset(cls, preset: Preset, **overrides) -> "RestoreConfig":
        cfg = cls(grouping=preset.grouping(), spec=preset.shrinkage(),
                  rho=preset.rho, lam=preset.lam, sigma=preset.sigma,
                  eps_var=preset.eps_var if preset.eps_var > 0 else 0.3)
        return replace(cfg, **overrides) if overrides else cfg


@dataclass
class IterationStats:
    iter: int
    psnr: float | None
    rel_change: float
    mean_tau: float
    seconds: float


@dataclass
class AdmmState:
    """Mutable solver state; all three images share one shape."""

    z: np.ndarray
    xhat: np.ndarray
    b: np.ndarray
    iter: int = 0
    trace: list[IterationStats] = field(default_factory=list)

    def __post_init__(self):
        if not (self.z.shape == self.xhat.shape == self.b.shape):
            raise ValidationError("state arrays must share one shape")


def group_lambdas(codes: np.ndarray, cfg: RestoreConfig) -> np.ndarray:
    """Per-group fidelity weights: the configured constant, or
    2*sqrt(2)*sigma^2 / (var(code) + eps_var) when adaptive."""
    if cfg.lam is not None:
        return np.full(codes.shape[0], float(cfg.lam))
    delta = np.maximum(codes.var(axis=1), 0.0)
    return _LAM_NUMER * cfg.sigma ** 2 / (delta + cfg.eps_var)


def group_taus(codes: np.ndarray, cfg: RestoreConfig, total_groups: int,
               n_pixels: int) -> np.ndarray:
    """Shrinkage scale per group: tau_i = lambda_i * S / (rho * N) with
    S = d * m * n over the whole layout."""
    d_times_m = np.prod(codes.shape[1:]) if codes.ndim > 1 else codes.shape[0]
    s_total = float(d_times_m) * total_groups
    return group_lambdas(codes, cfg) * s_total / (cfg.rho * n_pixels)


def a_update(l_img: GrayImage, cfg: RestoreConfig, threads: int = 1):
    """Reference per-group A-step: regroup on ``l_img``, learn a dictionary
    per group, shrink its code, and aggregate the decoded estimates.

    Returns (groups, dicts, codes, xhat) with the shrunk codes.  The solver
    itself uses the batched path in :func:`a_step_arrays`, which is tested
    to agree with this one.
    """
    groups = extract_groups(l_img, cfg.grouping, threads=threads)
    n = len(groups)
    n_pixels = l_img.height * l_img.width
    dicts, codes, estimates = [], [], []
    raw = np.stack([g.data for g in groups])
    d, m = raw.shape[1], raw.shape[2]
    if cfg.dict_mode == "pca":
        raise ValidationError("a_update materializes SVD dictionaries only; "
                              "use dict_mode='svd'")
    sing = np.empty((n, min(d, m)))
    pairs = []
    for i, g in enumerate(groups):
        dic, code = learn_adaptive(g)
        pairs.append((dic, code))
        sing[i] = code.coeffs
    taus = group_taus(sing, cfg, n, n_pixels)
    for i, g in enumerate(groups):
        dic, code = pairs[i]
        shrunk = shrink_code(code, cfg.spec, float(taus[i]))
        alpha = GroupCode(shrunk.values)
        dicts.append(dic)
        codes.append(alpha)
        estimates.append(decode(dic, alpha))
    xhat = aggregate(groups, estimates, l_img.height, l_img.width)
    return groups, dicts, codes, xhat


def _shrink_stack(codes: np.ndarray, taus: np.ndarray,
                  spec: ShrinkageSpec) -> np.ndarray:
    weights = code_weights(codes, spec)
    return gst(codes, taus[:, None] * weights, spec.p, spec.gst_iters)


def a_step_arrays(l_arr: np.ndarray, cfg: RestoreConfig, threads: int = 1,
                  chunk: int = 512):
    """Batched A-step on a raw array; returns (xhat, mean_tau, layout)."""
    img = GrayImage.from_array(l_arr)
    layout = match_layout(img, cfg.grouping, threads=threads)
    data = gather_groups(img, layout)
    n, d, m = data.shape
    n_pixels = l_arr.size
    estimates = np.empty_like(data)
    taus = np.empty(n)

    def run_svd(lo, hi):
        u, s, vt = np.linalg.svd(data[lo:hi], full_matrices=False)
        taus[lo:hi] = group_taus(s, cfg, n, n_pixels)
        alpha = _shrink_stack(s, taus[lo:hi], cfg.spec)
        estimates[lo:hi] = (u * alpha[:, None, :]) @ vt

    def run_pca(lo, hi):
        block = data[lo:hi]
        mean = block.mean(axis=2)
        centered = block - mean[..., None]
        cov = centered @ centered.transpose(0, 2, 1) / m
        _, vec = np.linalg.eigh(cov)
        basis = vec[..., ::-1]
        coef = basis.transpose(0, 2, 1) @ centered
        flat = coef.reshape(hi - lo, d * m)
        taus[lo:hi] = group_taus(flat, cfg, n, n_pixels)
        alpha = _shrink_stack(flat, taus[lo:hi], cfg.spec)
        estimates[lo:hi] = basis @ alpha.reshape(hi - lo, d, m) + mean[..., None]

    run = run_svd if cfg.dict_mode == "svd" else run_pca
    spans = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda s: run(*s), spans))
    else:
        for span in spans:
            run(*span)
    xhat = aggregate_estimates(layout.coords, estimates, layout.patch_size,
                               img.height, img.width)
    return xhat, float(taus.mean()), layout


def z_update_mask(state: AdmmState, y: np.ndarray, mask: PixelMask,
                  rho: float) -> np.ndarray:
    """Closed-form fidelity update for a 0/1 mask: kept pixels average the
    observation with the consensus, killed pixels copy the consensus."""
    q = state.xhat + state.b
    y = np.asarray(y, dtype=np.float64)
    if y.shape != mask.kept.shape:
        raise ValidationError(
            f"observation shape {y.shape} does not match mask "
            f"{mask.kept.shape}")
    return np.where(mask.kept, (y + rho * q) / (1.0 + rho), q)


def gram_apply(arr: np.ndarray, op: BlockCsOp) -> np.ndarray:
    """matrix^T matrix applied blockwise to an image."""
    blocks = image_to_blocks(arr, op.block)
    vecs = (blocks @ op.matrix.T) @ op.matrix
    return blocks_to_image(vecs, arr.shape[0], arr.shape[1], op.block)


def z_update_cs(state: AdmmState, meas: Measurements, op: BlockCsOp,
                rho: float, eta: float, hty: np.ndarray | None = None
                ) -> np.ndarray:
    """One gradient step on the fidelity-plus-penalty quadratic."""
    if hty is None:
        hty = np.asarray(cs_adjoint(meas, op).data)
    q = state.xhat + state.b
    grad = gram_apply(state.z, op) - hty + rho * (state.z - q)
    return state.z - eta * grad


def multiplier_update(b: np.ndarray, z: np.ndarray,
                      xhat: np.ndarray) -> np.ndarray:
    return b - (z - xhat)


def _clip_image(arr: np.ndarray) -> GrayImage:
    return GrayImage.from_array(np.clip(arr, 0.0, 255.0))


def quadratic_objective(z: np.ndarray, y_or_meas, op, q: np.ndarray,
                        rho: float) -> float:
    """The fidelity-plus-penalty quadratic minimized by the Z update."""
    if isinstance(op, PixelMask):
        resid = np.where(op.kept, z, 0.0) - np.asarray(y_or_meas, dtype=np.float64)
        fid = 0.5 * float(np.sum(resid ** 2))
    else:
        hz = image_to_blocks(z, op.block) @ op.matrix.T
        fid = 0.5 * float(np.sum((hz - y_or_meas.data) ** 2))
    return fid + 0.5 * rho * float(np.sum((z - q) ** 2))


def _init_state(observed, op, cfg) -> tuple[AdmmState, np.ndarray, np.ndarray | None]:
    """Initial state plus (y array or measurements, cached adjoint image)."""
    if isinstance(op, PixelMask):
        if not isinstance(observed, GrayImage):
            raise ValidationError("mask restoration expects a GrayImage")
        if observed.shape != (op.height, op.width):
            raise ValidationError(
                f"observation {observed.shape} does not match mask "
                f"{(op.height, op.width)}")
        y = np.asarray(observed.data)
        kept = op.kept
        fill = float(y[kept].mean()) if kept.any() else 0.0
        z0 = np.where(kept, y, fill)
        return AdmmState(z=z0, xhat=np.zeros_like(z0),
                         b=np.zeros_like(z0)), y, None
    if isinstance(op, BlockCsOp):
        if not isinstance(observed, Measurements):
            raise ValidationError("CS restoration expects Measurements")
        hty = np.asarray(cs_adjoint(observed, op).data)
        z0 = hty.copy()
        return AdmmState(z=z0, xhat=np.zeros_like(z0),
                         b=np.zeros_like(z0)), observed, hty
    raise ValidationError(f"unsupported operator type {type(op).__name__}")


def _check_finite(arr: np.ndarray, iteration: int) -> None:
    if not np.isfinite(arr).all():
        raise DivergenceError(
            f"solver state became non-finite at iteration {iteration}")


def _resolve_eta(cfg: RestoreConfig, op, with_rho: bool) -> float:
    if cfg.eta is not None:
        return cfg.eta
    bound = op.gram_spectral_norm() if isinstance(op, BlockCsOp) else 1.0
    return 1.0 / (bound + (cfg.rho if with_rho else 0.0))


def _rel_change(z_new: np.ndarray, z_old: np.ndarray) -> float:
    denom = float(np.linalg.norm(z_old))
    if denom == 0.0:
        return math.inf if np.linalg.norm(z_new) > 0 else 0.0
    return float(np.linalg.norm(z_new - z_old)) / denom


def restore(observed, op, cfg: RestoreConfig, *, oracle: GrayImage | None = None,
            threads: int = 1) -> tuple[GrayImage, list[IterationStats]]:
    """Run the full splitting until the stop rule or max_iters.

    ``observed`` is a degraded :class:`GrayImage` with a :class:`PixelMask`
    operator, or :class:`Measurements` with a :class:`BlockCsOp`.  With the
    oracle stop rule the ground-truth ``oracle`` image is required and the
    best-so-far estimate is returned once its PSNR first decreases.
    """
    if cfg.stop == "oracle" and oracle is None:
        raise ValidationError("oracle stop requires the ground-truth image")
    state, y_or_meas, hty = _init_state(observed, op, cfg)
    is_mask = isinstance(op, PixelMask)
    eta = None if is_mask else _resolve_eta(cfg, op, with_rho=True)

    best_xhat = state.xhat
    best_psnr = -math.inf
    for t in range(1, cfg.max_iters + 1):
        tic = time.perf_counter()
        z_prev = state.z
        if is_mask:
            state.z = z_update_mask(state, y_or_meas, op, cfg.rho)
        else:
            state.z = z_update_cs(state, y_or_meas, op, cfg.rho, eta, hty=hty)
        state.xhat, mean_tau, _ = a_step_arrays(state.z - state.b, cfg,
                                                threads=threads)
        state.b = multiplier_update(state.b, state.z, state.xhat)
        state.iter = t
        _check_finite(state.z, t)
        _check_finite(state.xhat, t)

        rel = _rel_change(state.z, z_prev)
        cur_psnr = None
        if oracle is not None:
            cur_psnr = psnr(_clip_image(state.xhat), oracle)
        state.trace.append(IterationStats(
            iter=t, psnr=cur_psnr, rel_change=rel, mean_tau=mean_tau,
            seconds=time.perf_counter() - tic))

        if cfg.stop == "oracle":
            if cur_psnr < best_psnr:
                return _clip_image(best_xhat), state.trace
            best_psnr, best_xhat = cur_psnr, state.xhat
        elif cfg.stop == "relchange" and rel < cfg.rel_tol:
            break
    final = best_xhat if cfg.stop == "oracle" else state.xhat
    return _clip_image(final), state.trace


def restore_ist(observed, op, cfg: RestoreConfig, *,
                oracle: GrayImage | None = None, threads: int = 1
                ) -> tuple[GrayImage, list[IterationStats]]:
    """Iterative shrinkage/thresholding baseline: a gradient step on the
    fidelity followed by the same grouped shrinkage, with no multiplier."""
    if cfg.stop == "oracle" and oracle is None:
        raise ValidationError("oracle stop requires the ground-truth image")
    state, y_or_meas, hty = _init_state(observed, op, cfg)
    is_mask = isinstance(op, PixelMask)
    eta = _resolve_eta(cfg, op, with_rho=False)

    x = state.z
    trace: list[IterationStats] = []
    best_x = x
    best_psnr = -math.inf
    for t in range(1, cfg.max_iters + 1):
        tic = time.perf_counter()
        if is_mask:
            grad = np.where(op.kept, x, 0.0) - y_or_meas
        else:
            grad = gram_apply(x, op) - hty
        landing = x - eta * grad
        x_new, mean_tau, _ = a_step_arrays(landing, cfg, threads=threads)
        _check_finite(x_new, t)
        rel = _rel_change(x_new, x)
        x = x_new
        cur_psnr = None
        if oracle is not None:
            cur_psnr = psnr(_clip_image(x), oracle)
        trace.append(IterationStats(iter=t, psnr=cur_psnr, rel_change=rel,
                                    mean_tau=mean_tau,
                                    seconds=time.perf_counter() - tic))
        if cfg.stop == "oracle":
            if cur_psnr < best_psnr:
                return _clip_image(best_x), trace
            best_psnr, best_x = cur_psnr, x
        elif cfg.stop == "relchange" and rel < cfg.rel_tol:
            break
    final = best_x if cfg.stop == "oracle" else x
    return _clip_image(final), trace


def theorem3_check(x_img: GrayImage, l_img: GrayImage,
                   layout: GroupLayout) -> dict:
    """Compare the image-domain mean squared error with the group-domain
    one: lhs = ||x - l||^2 / N, rhs = sum_i ||X_i - L_i||_F^2 / S with
    S = d * m * n.  Returns lhs, rhs and their relative gap."""
    if x_img.shape != l_img.shape:
        raise ValidationError(
            f"image shapes differ: {x_img.shape} vs {l_img.shape}")
    p = layout.patch_size
    coords = layout.coords
    if coords.size:
        r, c = coords[..., 0], coords[..., 1]
        if (r < 0).any() or (c < 0).any() or (r > x_img.height - p).any() \
                or (c > x_img.width - p).any():
            raise ValidationError("layout coordinates leave the image")
    x_groups = gather_groups(x_img, layout)
    l_groups = gather_groups(l_img, layout)
    n_pixels = x_img.height * x_img.width
    lhs = float(np.sum((np.asarray(x_img.data) - np.asarray(l_img.data)) ** 2))
    lhs /= n_pixels
    s_total = x_groups.size
    rhs = float(np.sum((x_groups - l_groups) ** 2)) / s_total
    top = max(lhs, rhs)
    gap = 0.0 if top == 0.0 else abs(lhs - rhs) / top
    return {"lhs": lhs, "rhs": rhs, "rel_gap": gap}

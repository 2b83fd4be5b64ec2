"""Shrinkage kernels: soft thresholding, singular value thresholding, and
the generalized (lp) soft-thresholding family with optional per-entry
weights.

One parameterized code path realizes the four norm minimizations used in
the restoration solver: unweighted/weighted times p=1/p<1.  The exact
polynomial-root solvers for p=1/2 and p=2/3 exist as independent oracles
for the iterative kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GroupCode, ShrinkageSpec, ValidationError


def soft(a, tau: float):
    """Soft-threshold ``a`` by ``tau``: sign(a) * max(|a| - tau, 0)."""
    if tau < 0:
        raise ValidationError(f"tau must be nonnegative, got {tau}")
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def svt(y, tau: float) -> np.ndarray:
    """Singular value thresholding: soft-threshold the singular values.

    Minimizes 0.5 * ||y - x||_F^2 + tau * ||x||_* over x.
    """
    if tau < 0:
        raise ValidationError(f"tau must be nonnegative, got {tau}")
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValidationError("svt input contains non-finite values")
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    return (u * soft(s, tau)) @ vt


def gst_threshold(w, p: float):
    """Dead-zone threshold of the generalized soft-thresholding operator.

    tau(w) = (2w(1-p))^(1/(2-p)) + w p (2w(1-p))^((p-1)/(2-p)); inputs with
    magnitude at or below it shrink to exactly zero.  At p=1 the formula
    degenerates and the soft-threshold limit tau = w is used.
    """
    w = np.asarray(w, dtype=np.float64)
    if (w < 0).any():
        raise ValidationError("weights must be nonnegative")
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        return w.copy() if w.ndim else float(w)
    base = 2.0 * w * (1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        thr = base ** (1.0 / (2.0 - p)) + w * p * base ** ((p - 1.0) / (2.0 - p))
    thr = np.where(w == 0.0, 0.0, thr)
    return thr if thr.ndim else float(thr)


def gst(gamma, w, p: float, iters: int = 2):
    """Generalized soft-thresholding for 0.5*(gamma - a)^2 + w*|a|^p.

    Returns 0 inside the dead zone; otherwise runs the fixed-point
    recursion a <- |gamma| - w*p*a^(p-1) from a0 = |gamma| for exactly
    ``iters`` steps and returns sign(gamma) times the final iterate.
    Vectorized over ``gamma`` and ``w``.
    """
    if iters < 1:
        raise ValidationError(f"iters must be >= 1, got {iters}")
    gamma_in = np.asarray(gamma, dtype=np.float64)
    w_in = np.asarray(w, dtype=np.float64)
    scalar = gamma_in.ndim == 0 and w_in.ndim == 0
    shape = np.broadcast_shapes(gamma_in.shape, w_in.shape)
    gam = np.broadcast_to(gamma_in, shape).ravel()
    w_arr = np.broadcast_to(w_in, shape).ravel()
    g = np.abs(gam)
    thr = np.atleast_1d(np.asarray(gst_threshold(w_arr, p)))

    out = np.zeros_like(g)
    sel = g > thr
    if sel.any():
        gs, ws = g[sel], w_arr[sel]
        a = gs.copy()
        for _ in range(iters):
            a = gs - ws * p * a ** (p - 1.0)
        out[sel] = a
    out = out * np.sign(gam)
    return float(out[0]) if scalar else out.reshape(shape)


def _objective(alpha, gamma, reg, p):
    return 0.5 * (gamma - alpha) ** 2 + reg * np.abs(alpha) ** p


def _best_positive_root(poly, gamma_abs, reg, p):
    roots = np.roots(poly)
    real = roots[np.abs(roots.imag) < 1e-8 * np.maximum(1.0, np.abs(roots))].real
    cand = real[(real > 0.0) & (real <= gamma_abs + 1e-12)]
    best, best_val = 0.0, _objective(0.0, gamma_abs, reg, p)
    for r in cand:
        val = _objective(r, gamma_abs, reg, p)
        if val < best_val:
            best, best_val = float(r), val
    return best


def gst_p_half_exact(gamma: float, w: float, tau: float) -> float:
    """Exact p=1/2 shrinkage via the cubic
    a^3 - 2|g|a^2 + g^2 a - (tau*w)^2/4 = 0, selecting the root that
    minimizes the scalar objective (0 when no admissible root wins).
    """
    g = abs(float(gamma))
    reg = float(tau) * float(w)
    if reg < 0:
        raise ValidationError("tau*w must be nonnegative")
    if reg == 0.0:
        return float(gamma)
    root = _best_positive_root(
        [1.0, -2.0 * g, g * g, -(reg * reg) / 4.0], g, reg, 0.5)
    return float(np.sign(gamma) * root)


def gst_p_twothirds_exact(gamma: float, w: float, tau: float) -> float:
    """Exact p=2/3 shrinkage via the quartic
    a^4 - 3|g|a^3 + 3g^2 a^2 - g^3 a + 8(tau*w)^3/27 = 0.
    """
    g = abs(float(gamma))
    reg = float(tau) * float(w)
    if reg < 0:
        raise ValidationError("tau*w must be nonnegative")
    if reg == 0.0:
        return float(gamma)
    root = _best_positive_root(
        [1.0, -3.0 * g, 3.0 * g * g, -g ** 3, 8.0 * reg ** 3 / 27.0],
        g, reg, 2.0 / 3.0)
    return float(np.sign(gamma) * root)


@dataclass(frozen=True)
class ShrinkResult:
    """Shrunk coefficients plus the per-entry effective threshold tau*w."""

    values: np.ndarray
    thresholds_used: np.ndarray


def code_weights(coeffs: np.ndarray, spec: ShrinkageSpec) -> np.ndarray:
    """Per-entry weights: all ones, or 1/(|coeff| + eps) so that larger
    coefficients receive smaller effective thresholds."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if not spec.weighted:
        return np.ones_like(coeffs)
    return 1.0 / (np.abs(coeffs) + spec.eps_weight)


def shrink_code(code: GroupCode, spec: ShrinkageSpec, tau_i: float) -> ShrinkResult:
    """Shrink a group code: entry j maps to gst(c_j, tau_i * w_j, p, K).

    Weights come from the pre-shrink code (single assignment, no
    reweighting inside one call).
    """
    if tau_i < 0:
        raise ValidationError(f"tau_i must be nonnegative, got {tau_i}")
    gam = code.coeffs
    eff = tau_i * code_weights(gam, spec)
    vals = gst(gam, eff, spec.p, spec.gst_iters)
    return ShrinkResult(values=vals, thresholds_used=eff)

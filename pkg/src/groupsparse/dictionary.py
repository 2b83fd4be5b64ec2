"""Per-group dictionaries.

The adaptive dictionary of a group is built from one thin SVD: atom j is
the rank-one matrix u_j v_j^T, so the atoms are orthonormal under the
trace inner product and coefficient-space distances equal matrix-space
distances.  A PCA patch basis is provided as an alternative dictionary
for shrinking in coefficient space.
"""

from __future__ import annotations

import numpy as np

from .core import GroupCode, GroupDictionary, PatchGroup, ValidationError


def fix_svd_signs(u: np.ndarray, vt: np.ndarray):
    """Resolve the SVD sign ambiguity: make the largest-magnitude entry of
    each left vector positive (flipping the right vector to match).

    Operates on a single (d, k)/(k, m) pair or batched (..., d, k)/(..., k, m).
    """
    peak = np.take_along_axis(
        u, np.argmax(np.abs(u), axis=-2)[..., None, :], axis=-2)
    flip = np.squeeze(peak, axis=-2) < 0
    sign = np.where(flip, -1.0, 1.0)
    return u * sign[..., None, :], vt * sign[..., :, None]


def learn_adaptive(group: PatchGroup) -> tuple[GroupDictionary, GroupCode]:
    """Learn the rank-one atom dictionary and the group's code from one SVD.

    The code equals the singular values in non-increasing order; small
    singular values are kept, not truncated.
    """
    try:
        u, s, vt = np.linalg.svd(group.data, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"SVD failed: {exc}") from exc
    u, vt = fix_svd_signs(u, vt)
    return GroupDictionary(left=u, right=vt.T), GroupCode(s)


def decode(dictionary: GroupDictionary, code: GroupCode) -> np.ndarray:
    """Reconstruct sum_j code_j * left[:, j] right[:, j]^T."""
    if len(code) != dictionary.n_atoms:
        raise ValidationError(
            f"code length {len(code)} does not match the {dictionary.n_atoms} "
            f"dictionary atoms")
    return (dictionary.left * code.coeffs) @ dictionary.right.T


def learn_pca(group: PatchGroup):
    """PCA patch basis of a group: eigenvectors of the mean-removed column
    covariance, eigenvalue-descending.

    Returns (basis, coefficients, mean); the group reconstructs as
    basis @ coefficients + mean[:, None].  A degenerate covariance falls
    back to the identity basis.
    """
    if group.match_count < 2:
        raise ValidationError("PCA needs at least 2 patches per group")
    data = group.data
    mean = data.mean(axis=1)
    centered = data - mean[:, None]
    cov = centered @ centered.T / group.match_count
    try:
        eigval, eigvec = np.linalg.eigh(cov)
        if not np.isfinite(eigvec).all():
            raise np.linalg.LinAlgError("non-finite eigenvectors")
        basis = eigvec[:, ::-1].copy()
    except np.linalg.LinAlgError:
        basis = np.eye(data.shape[0])
    coeffs = basis.T @ centered
    return basis, coeffs, mean

"""Per-group sparsity analysis.

For a chosen reference patch, the group is matched on the degraded (or
initial-estimate) image, its singular values are shrunk under each norm
mode, and the results are compared against the singular values of the
co-located clean group (same coordinates, so "truth" is the same patch
set).  Thresholds follow the same per-group schedule as one solver A-step
at iteration zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import (GrayImage, GroupCode, PatchGroup, ShrinkageSpec,
                   ValidationError)
from .grouping import (GroupingConfig, GroupLayout, _match_one, _patch_stack,
                       gather_groups, match_layout)
from .presets import get_preset
from .prox import shrink_code
from .restoration import RestoreConfig, group_taus


@dataclass(frozen=True)
class NormSetting:
    """One column of the analysis table: a named shrinkage mode with its
    penalty and fidelity weight (lam=None means the adaptive schedule)."""

    name: str
    spec: ShrinkageSpec
    rho: float
    lam: float | None
    sigma: float
    eps_var: float

    def config(self, grouping: GroupingConfig) -> RestoreConfig:
        eps_var = self.eps_var if self.eps_var > 0 else 0.3
        return RestoreConfig(grouping=grouping, spec=self.spec, rho=self.rho,
                             lam=self.lam, sigma=self.sigma, eps_var=eps_var)


_NORM_BY_COLUMN = {"nnm": "l1", "wnnm": "wl1", "snm": "lp", "wsnm": "wlp"}
COLUMN_ORDER = ("nnm", "wnnm", "snm", "wsnm")


def default_settings(scenario: str):
    """The four norm modes of a preset scenario in table column order.

    Returns (settings, grouping config).
    """
    settings = []
    grouping = None
    for name in COLUMN_ORDER:
        pre = get_preset(scenario, _NORM_BY_COLUMN[name])
        grouping = pre.grouping()
        settings.append(NormSetting(name=name, spec=pre.shrinkage(),
                                    rho=pre.rho, lam=pre.lam, sigma=pre.sigma,
                                    eps_var=pre.eps_var))
    return settings, grouping


def group_at(img: GrayImage, ref_coord, cfg: GroupingConfig) -> PatchGroup:
    """Match one group whose reference patch sits at ``ref_coord``."""
    r, c = int(ref_coord[0]), int(ref_coord[1])
    p = cfg.patch_size
    if not (0 <= r <= img.height - p and 0 <= c <= img.width - p):
        raise ValidationError(
            f"reference coordinate ({r}, {c}) leaves a {p}x{p} patch outside "
            f"a {img.height}x{img.width} image")
    patches = _patch_stack(np.asarray(img.data), p)
    coords = _match_one(patches, r, c, cfg)
    data = patches[coords[:, 0], coords[:, 1]].T
    return PatchGroup(data, coords)


def analyze_group(clean: GrayImage, degraded_init: GrayImage, ref_coord,
                  grouping: GroupingConfig,
                  settings: list[NormSetting]) -> dict:
    """Singular-value comparison table for one reference patch.

    Returns a dict of equal-length columns: ``index``, ``truth`` (clean
    group singular values at the matched coordinates), then one column per
    setting, in the given order.
    """
    if clean.shape != degraded_init.shape:
        raise ValidationError(
            f"image shapes differ: {clean.shape} vs {degraded_init.shape}")
    group = group_at(degraded_init, ref_coord, grouping)
    gamma = np.linalg.svd(group.data, compute_uv=False)

    layout = GroupLayout(grouping.patch_size, group.coords[None, :, :])
    truth_data = gather_groups(clean, layout)[0]
    truth = np.linalg.svd(truth_data, compute_uv=False)

    n_groups = match_layout(degraded_init, grouping).n_groups
    n_pixels = clean.height * clean.width
    table = {"index": np.arange(gamma.shape[0]), "truth": truth}
    for setting in settings:
        cfg = setting.config(grouping)
        tau = group_taus(gamma[None, :], cfg, n_groups, n_pixels)[0]
        shrunk = shrink_code(GroupCode(gamma), setting.spec, float(tau))
        table[setting.name] = np.abs(shrunk.values)
    return table


def curve_distance(table: dict, name: str) -> float:
    """l2 distance of a shrunk singular-value curve to the truth column."""
    return float(np.linalg.norm(table[name] - table["truth"]))


def emit_analysis_csv(table: dict, path) -> None:
    """Write the table with the column names as header; floats carry 17
    significant digits so parsing back reproduces the exact values."""
    names = list(table)
    n = len(table["index"])
    if n == 0:
        raise ValidationError("refusing to write an empty analysis table")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(n):
            row = [int(table["index"][i])]
            row += [format(float(table[name][i]), ".17g") for name in names[1:]]
            writer.writerow(row)


def read_analysis_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        cols = {name: [] for name in names}
        for row in reader:
            for name, value in zip(names, row):
                cols[name].append(value)
    out = {"index": np.asarray([int(v) for v in cols["index"]])}
    for name in names[1:]:
        out[name] = np.asarray([float(v) for v in cols[name]])
    return out

"""Named parameter presets for the restoration solver.

Inpainting presets are keyed miss50/miss60/miss70/miss80 (fraction of
missing pixels), compressive-sensing presets r02/r03/r04/r05 (measurement
ratio).  Each preset binds the penalty rho, a fixed fidelity weight or
the adaptive per-group schedule (lam=None), the shrinkage exponent and
weighting, and the grouping geometry for each of the four norm modes
l1 / lp / wl1 / wlp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ShrinkageSpec, ValidationError
from .grouping import GroupingConfig

NORMS = ("l1", "lp", "wl1", "wlp")

SIGMA_DEFAULT = math.sqrt(2.0)
GST_ITERS_DEFAULT = 2
EPS_WEIGHT_DEFAULT = 0.35
STRIDE_DEFAULT = 4


@dataclass(frozen=True)
class Preset:
    task: str        # "inpaint" | "cs"
    scenario: str    # "miss80" ... / "r02" ...
    norm: str        # "l1" | "lp" | "wl1" | "wlp"
    rho: float
    lam: float | None      # None = adaptive per-group schedule
    p: float
    weighted: bool
    eps_var: float
    patch_size: int
    match_count: int
    window: int
    stride: int = STRIDE_DEFAULT
    sigma: float = SIGMA_DEFAULT
    eps_weight: float = EPS_WEIGHT_DEFAULT
    gst_iters: int = GST_ITERS_DEFAULT

    def grouping(self) -> GroupingConfig:
        return GroupingConfig(patch_size=self.patch_size,
                              match_count=self.match_count,
                              window=self.window, stride=self.stride)

    def shrinkage(self) -> ShrinkageSpec:
        return ShrinkageSpec(p=self.p, weighted=self.weighted,
                             eps_weight=self.eps_weight,
                             gst_iters=self.gst_iters)


# scenario -> (p for the lp/wlp modes, {norm: (rho, lam)})
_INPAINT = {
    "miss80": (0.45, {"l1": (7e-5, 5e-6), "lp": (0.006, 0.07),
                      "wl1": (0.1, None), "wlp": (0.0003, None)}),
    "miss70": (0.45, {"l1": (1e-4, 7e-6), "lp": (0.008, 0.07),
                      "wl1": (0.1, None), "wlp": (0.0003, None)}),
    "miss60": (0.95, {"l1": (1e-5, 1e-6), "lp": (7e-5, 3e-6),
                      "wl1": (0.1, None), "wlp": (0.03, None)}),
    "miss50": (0.95, {"l1": (5e-5, 1e-5), "lp": (0.0001, 7e-6),
                      "wl1": (0.1, None), "wlp": (0.04, None)}),
}

_CS = {
    "r02": (0.5, {"l1": (0.001, 5e-5), "lp": (0.003, 5e-4),
                  "wl1": (0.1, None), "wlp": (0.0005, None)}),
    "r03": (0.95, {"l1": (0.003, 7e-4), "lp": (0.01, 3e-4),
                   "wl1": (0.1, None), "wlp": (0.05, None)}),
    "r04": (0.95, {"l1": (0.003, 5e-4), "lp": (0.006, 3e-4),
                   "wl1": (0.1, None), "wlp": (0.05, None)}),
    "r05": (0.95, {"l1": (0.003, 5e-4), "lp": (0.006, 3e-4),
                   "wl1": (0.2, None), "wlp": (0.05, None)}),
}

# variance floor of the adaptive fidelity schedule, per weighted mode
_EPS_VAR = {
    ("inpaint", "wl1"): 0.1,
    ("inpaint", "wlp"): 0.3,
    ("cs", "wl1"): 0.1,
    ("cs", "wlp"): 0.4,
}

MISSING_FRACTION = {"miss80": 0.8, "miss70": 0.7, "miss60": 0.6, "miss50": 0.5}
CS_RATIO = {"r02": 0.2, "r03": 0.3, "r04": 0.4, "r05": 0.5}


def preset_names() -> list[str]:
    return list(_INPAINT) + list(_CS)


def get_preset(scenario: str, norm: str) -> Preset:
    if norm not in NORMS:
        raise ValidationError(
            f"unknown norm '{norm}'; choose one of {', '.join(NORMS)}")
    if scenario in _INPAINT:
        task, (p_scenario, table) = "inpaint", _INPAINT[scenario]
        patch, window = 8, 25
    elif scenario in _CS:
        task, (p_scenario, table) = "cs", _CS[scenario]
        patch, window = 7, 20
    else:
        raise ValidationError(
            f"unknown preset '{scenario}'; choose one of "
            f"{', '.join(preset_names())}")
    rho, lam = table[norm]
    weighted = norm.startswith("w")
    p = 1.0 if norm in ("l1", "wl1") else p_scenario
    eps_var = _EPS_VAR.get((task, norm), 0.0)
    return Preset(task=task, scenario=scenario, norm=norm, rho=rho, lam=lam,
                  p=p, weighted=weighted, eps_var=eps_var, patch_size=patch,
                  match_count=60, window=window)

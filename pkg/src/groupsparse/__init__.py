"""Group-based sparse coding for grayscale image restoration.

Restores images degraded by random pixel masks (inpainting) or block
Gaussian compressive sensing, by shrinking the singular-value codes of
groups of similar patches on per-group SVD dictionaries inside an ADMM
loop.
"""

from .core import (GrayImage, GroupCode, GroupDictionary, PatchGroup,
                   PixelMask, ShrinkageSpec, ValidationError, validate_image)
from .dictionary import decode, learn_adaptive, learn_pca
from .grouping import (GroupingConfig, GroupLayout, aggregate, extract_groups,
                       match_layout)
from .operators import (BlockCsOp, Measurements, apply_mask, cs_adjoint,
                        cs_measure, load_measurements, psnr, random_mask,
                        save_measurements)
from .presets import Preset, get_preset, preset_names
from .prox import (ShrinkResult, gst, gst_p_half_exact, gst_p_twothirds_exact,
                   gst_threshold, shrink_code, soft, svt)
from .restoration import (AdmmState, DivergenceError, IterationStats,
                          RestoreConfig, a_update, multiplier_update, restore,
                          restore_ist, theorem3_check, z_update_cs,
                          z_update_mask)
from .analysis import (NormSetting, analyze_group, default_settings,
                       emit_analysis_csv)

__version__ = "0.1.0"

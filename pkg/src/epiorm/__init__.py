"""Light-field depth estimation from horizontal and vertical EPI patches."""

from .lightfield import (
    EPI,
    DisparityMap,
    EPIPatch,
    LightField4D,
    extract_patch,
    horizontal_epi,
    subaperture,
    vertical_epi,
)
from .metrics import badpix, error_map, mse100
from .network import NetConfig, init_params, network_forward
from .refocus import adjust_gt, augment, refocus_epi, refocus_lightfield, view_shift

__version__ = "0.1.0"

__all__ = [
    "EPI", "DisparityMap", "EPIPatch", "LightField4D", "extract_patch", "horizontal_epi",
    "subaperture", "vertical_epi", "badpix", "error_map", "mse100", "NetConfig", "init_params",
    "network_forward", "adjust_gt", "augment", "refocus_epi", "refocus_lightfield", "view_shift",
]

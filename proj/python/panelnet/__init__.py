"""Panel-based panorama models: geometry, panel pipeline, metrics and synthetic rooms."""

from ._panelnet import (
    ConfigError,
    DataError,
    NumericError,
    PanelConfig,
    berhu,
    covering_panels,
    depth_metrics,
    gradcheck,
    gradcheck_modules,
    merge,
    partition,
    pixel_to_angles,
    read_sample,
    render_room,
    seg_metrics,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "PanelConfig",
    "berhu",
    "covering_panels",
    "depth_metrics",
    "gradcheck",
    "gradcheck_modules",
    "merge",
    "partition",
    "pixel_to_angles",
    "read_sample",
    "render_room",
    "seg_metrics",
]

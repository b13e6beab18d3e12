"""Region-based attribution (XRAI), perturbation sanity checks and
performance-information-curve evaluation for image classifiers."""

from pyxrai.core import (
    ParameterError,
    compose_bokeh,
    compressed_size,
    default_blur_sigma,
    dilate,
    gaussian_blur,
)
from pyxrai.model import GridFunction, LinearModel, TinyNet
from pyxrai.attribution import (
    BaselineSpec,
    edge_attribution,
    gradient_saliency,
    gradient_times_input,
    ig_multi_baseline,
    integrated_gradients,
    random_attribution,
)
from pyxrai.segmentation import Segment, SegmentSet, felzenszwalb, multi_scale_segments
from pyxrai.xrai import (
    SaliencyTrajectory,
    heatmap_from_trajectory,
    mask_at_area,
    xrai_gain,
    xrai_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineSpec",
    "GridFunction",
    "LinearModel",
    "ParameterError",
    "SaliencyTrajectory",
    "Segment",
    "SegmentSet",
    "TinyNet",
    "compose_bokeh",
    "compressed_size",
    "default_blur_sigma",
    "dilate",
    "edge_attribution",
    "felzenszwalb",
    "gaussian_blur",
    "gradient_saliency",
    "gradient_times_input",
    "heatmap_from_trajectory",
    "ig_multi_baseline",
    "integrated_gradients",
    "mask_at_area",
    "multi_scale_segments",
    "random_attribution",
    "xrai_gain",
    "xrai_trajectory",
]

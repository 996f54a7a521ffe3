"""Thread-density and angle mapping for plain-weave canvas X-rays."""

from .imgproc import GrayImage, crop, load_image, orient, resample, rotate, save_image
from .preprocess import PreprocessParams, preprocess
from .dataset import LabeledSample, TrainingExample, WeaveParams, augment_full, generate_views, synth_fabric
from .crossings import CentroidSet, binarize, extract_centroids, otsu_threshold
from .spatialcount import DensityEstimate, SCParams, estimate
from .freqcount import FTParams, fa_on_mask, ft_density
from .canvasmap import DensityMap, SweepResult, pair_compare, render, sweep

__version__ = "0.1.0"

__all__ = [
    "CentroidSet",
    "DensityEstimate",
    "DensityMap",
    "FTParams",
    "GrayImage",
    "LabeledSample",
    "PreprocessParams",
    "SCParams",
    "SweepResult",
    "TrainingExample",
    "WeaveParams",
    "augment_full",
    "binarize",
    "crop",
    "estimate",
    "extract_centroids",
    "fa_on_mask",
    "ft_density",
    "generate_views",
    "load_image",
    "orient",
    "otsu_threshold",
    "pair_compare",
    "preprocess",
    "render",
    "resample",
    "rotate",
    "save_image",
    "sweep",
    "synth_fabric",
    "__version__",
]

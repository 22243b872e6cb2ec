"""Coherence classification for complex InSAR interferograms.

Pipeline: a bottleneck autoencoder filters the noisy interferogram, the
7x7 windowed coherence of (noisy, filtered) is thresholded and cleaned by
an exact graph-cut MRF into training labels, and a small separable-conv
CNN learns to score each pixel's coherence from the raw interferogram.
A simulator with known per-pixel coherence provides ground truth, and the
evaluation module compares the classifier against the boxcar baseline.
"""

from . import cli, coherence, evaluate, mrf, nn, pipeline, raster, sim
from .errors import (
    DataError,
    DegenerateInputError,
    FormatError,
    ParameterError,
    ShapeError,
    TrainingDivergedError,
    TruncationError,
)

__all__ = [
    "cli",
    "coherence",
    "evaluate",
    "mrf",
    "nn",
    "pipeline",
    "raster",
    "sim",
    "DataError",
    "DegenerateInputError",
    "FormatError",
    "ParameterError",
    "ShapeError",
    "TrainingDivergedError",
    "TruncationError",
]

__version__ = "0.1.0"

"""Feature export from pretrained image-classification backbones.

The exporter turns a directory of images into an N x M feature matrix: each
image is resized to the model's input side, passed through the headless
(classifier-free) network, and globally average-pooled into one row. Output
files use the portable FMX1 binary or CSV layouts, so any consumer of those
formats can ingest real-model features without a TensorFlow dependency.
"""

from .errors import (
    DuplicateImageIdError,
    EmptyDirectoryError,
    ExportError,
    UnknownModelError,
    UnreadableImageError,
)
from .export import ExportJob, export_features, find_images
from .models import ModelInfo, list_models, model_info
from .writer import write_features

__all__ = [
    "DuplicateImageIdError",
    "EmptyDirectoryError",
    "ExportError",
    "ExportJob",
    "ModelInfo",
    "UnknownModelError",
    "UnreadableImageError",
    "export_features",
    "find_images",
    "list_models",
    "model_info",
    "write_features",
]

"""Run a backbone over a directory of images and write the feature matrix."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DuplicateImageIdError,
    EmptyDirectoryError,
    UnreadableImageError,
)
from .models import build_model, model_info
from .writer import write_features

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm")


@dataclass(frozen=True)
class ExportJob:
    """One export request: which model, which images, where the file goes.

    Ids in the output are the file names without their extension, so the
    matrix joins manifests that reference images by stem. ``weights=None``
    runs the architecture with random initialization (useful for tests and
    dry runs with no weight download); the default pulls the pretrained
    ImageNet weights.
    """

    model_name: str
    image_dir: str
    out_path: str
    weights: str | None = "imagenet"
    batch_size: int = 32

    def __post_init__(self):
        model_info(self.model_name)  # raises UnknownModelError early
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def find_images(directory) -> list:
    """Image paths under `directory`, sorted by file name."""
    root = Path(directory)
    if not root.is_dir():
        raise EmptyDirectoryError(root)
    paths = sorted(
        (p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.name,
    )
    if not paths:
        raise EmptyDirectoryError(root)
    by_id: dict = {}
    for p in paths:
        by_id.setdefault(p.stem, []).append(p)
    for image_id, owners in by_id.items():
        if len(owners) > 1:
            raise DuplicateImageIdError(image_id, owners)
    return paths


def load_batch(paths, side: int) -> np.ndarray:
    """Decode and resize images to an (n, side, side, 3) float32 batch."""
    rows = []
    for p in paths:
        try:
            with Image.open(p) as img:
                rgb = img.convert("RGB").resize((side, side), Image.BILINEAR)
        except Exception as exc:
            raise UnreadableImageError(p, exc) from exc
        rows.append(np.asarray(rgb, dtype=np.float32))
    return np.stack(rows)


def export_features(job: ExportJob):
    """Extract one feature vector per image and write the output file.

    Returns ``(ids, matrix)`` with the float64 rows exactly as written; rows
    follow sorted file-name order.
    """
    paths = find_images(job.image_dir)
    info = model_info(job.model_name)
    model, preprocess = build_model(job.model_name, weights=job.weights)
    chunks = []
    for start in range(0, len(paths), job.batch_size):
        batch = load_batch(paths[start : start + job.batch_size], info.input_side)
        out = model(preprocess(batch), training=False)
        chunks.append(np.asarray(out, dtype=np.float64))
    matrix = np.concatenate(chunks, axis=0)
    ids = tuple(p.stem for p in paths)
    write_features(ids, matrix, job.out_path)
    return ids, matrix

"""Root-cause clustering pipelines for DNN failure analysis.

The package takes per-image feature vectors (or per-layer heatmaps) for the
inputs a model got wrong, groups them with self-tuning clustering after
optional dimensionality reduction, and scores the resulting clusters against
known injected failure scenarios. A small fault-injection toolkit builds
tagged test corpora so the whole loop can be evaluated end to end.
"""

from __future__ import annotations

__version__ = "0.1.0"

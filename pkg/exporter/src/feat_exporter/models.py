"""The supported backbones and their fixed geometry.

Each entry names a pretrained classification network, the square input side
images are resized to, and the width of the penultimate representation: the
output of global average pooling over the last convolutional block, which is
where the feature vector is taken (inference only, no fine-tuning, since
fine-tuned backbones produce lower-purity clusters downstream).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownModelError


@dataclass(frozen=True)
class ModelInfo:
    name: str
    input_side: int
    feature_dim: int


MODEL_TABLE = (
    ModelInfo("vgg16", 224, 512),
    ModelInfo("resnet50", 224, 2048),
    ModelInfo("inception_v3", 224, 2048),
    ModelInfo("xception", 299, 2048),
)


def list_models() -> tuple:
    """The full model table, in a stable order."""
    return MODEL_TABLE


def model_info(name: str) -> ModelInfo:
    for info in MODEL_TABLE:
        if info.name == name:
            return info
    raise UnknownModelError(name, [i.name for i in MODEL_TABLE])


def build_model(name: str, weights: str | None = "imagenet"):
    """Instantiate the headless backbone plus its preprocessing function.

    TensorFlow is imported here, not at module load, so listing models and
    argument validation stay instant. Returns ``(model, preprocess)`` where
    ``preprocess`` maps raw RGB float32 batches to the network's expected
    input scaling.
    """
    info = model_info(name)
    from tensorflow.keras import applications

    families = {
        "vgg16": (applications.VGG16, applications.vgg16.preprocess_input),
        "resnet50": (applications.ResNet50, applications.resnet50.preprocess_input),
        "inception_v3": (
            applications.InceptionV3,
            applications.inception_v3.preprocess_input,
        ),
        "xception": (applications.Xception, applications.xception.preprocess_input),
    }
    ctor, preprocess = families[info.name]
    model = ctor(
        include_top=False,
        weights=weights,
        pooling="avg",
        input_shape=(info.input_side, info.input_side, 3),
    )
    return model, preprocess

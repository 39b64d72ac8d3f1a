"""Context-encoder image outpainting: data, models, training, evaluation,
compositing and harmonization."""

from outpainter.data import (
    DatasetHandle,
    MaskSpec,
    channel_means,
    load_dataset,
    make_masked_input,
    preprocess,
)
from outpainter.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    forward_discriminator,
    forward_generator,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetHandle",
    "Discriminator",
    "DiscriminatorConfig",
    "Generator",
    "GeneratorConfig",
    "MaskSpec",
    "build_discriminator",
    "build_generator",
    "channel_means",
    "forward_discriminator",
    "forward_generator",
    "load_dataset",
    "make_masked_input",
    "preprocess",
]

"""Dataset generation and all on-disk formats."""

from .dataset import CLASS_NAMES, DatasetSpec, LabeledImage, generate_dataset, stack_images
from .imageio import load_image, save_image
from .tensorio import load_checkpoint, load_tensor, save_checkpoint, save_tensor

__all__ = [
    "CLASS_NAMES",
    "DatasetSpec",
    "LabeledImage",
    "generate_dataset",
    "load_checkpoint",
    "load_image",
    "load_tensor",
    "save_checkpoint",
    "save_image",
    "save_tensor",
    "stack_images",
]

"""Body-part colour palettes, HSV statistics, correlation and segmentation metrics
for segmented insect photographs."""

from .annot import AnnotationSet, BodyPart, PartAnnotation
from .colour import HsvTriple, Palette, PartColourStats, build_palette, kmeans, mean_part_colour, rgb_to_hsv
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet", "BodyPart", "PartAnnotation", "HsvTriple", "Palette", "PartColourStats",
    "build_palette", "kmeans", "mean_part_colour", "rgb_to_hsv", "BACKEND",
]

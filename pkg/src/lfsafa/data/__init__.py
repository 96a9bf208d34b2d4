"""Light-field containers, I/O, color, resampling, synthesis and patch sampling."""
from .color import rgb_to_y, rgb_to_ycbcr, ycbcr_to_rgb
from .lightfield import (
    LightField,
    SaiIndex,
    angular_size_of_dir,
    decode_lf,
    demux_macro_pixel,
    encode_macro_pixel,
    read_png,
    save_view_dir,
    write_png,
)
from .patches import PatchPair, augment, degrade, random_augment, sample_patch, transform_views
from .resize import bicubic_resize, cubic, resize_weights, shift_image
from .synthetic import random_scene, synth_lf, synthetic_dataset

__all__ = [
    "LightField", "PatchPair", "SaiIndex", "angular_size_of_dir", "augment", "bicubic_resize", "cubic",
    "decode_lf", "degrade", "demux_macro_pixel", "encode_macro_pixel", "random_augment", "random_scene",
    "read_png", "resize_weights", "rgb_to_y", "rgb_to_ycbcr", "sample_patch", "save_view_dir", "shift_image",
    "synth_lf", "synthetic_dataset", "transform_views", "write_png", "ycbcr_to_rgb",
]

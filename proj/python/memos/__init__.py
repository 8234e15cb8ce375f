"""Python surface of the synthetic-OOD segmentation lab.

Thin numpy-facing wrappers over the C++ core: procedural scene generation,
blur-based OOD synthesis, softmax/entropy, the correctness net's input
encoding and the pixel-level detection metrics.
"""

from ._memos import (
    MemosError,
    auprc,
    blur_out_classes,
    entropy,
    fpr_at_95_tpr,
    gaussian_blur,
    generate_toy_scenes,
    load_sample,
    metacog_input,
    miou,
    predict_labels,
    softmax,
    validate_dataset,
)

__all__ = [
    "MemosError",
    "auprc",
    "blur_out_classes",
    "entropy",
    "fpr_at_95_tpr",
    "gaussian_blur",
    "generate_toy_scenes",
    "load_sample",
    "metacog_input",
    "miou",
    "predict_labels",
    "softmax",
    "validate_dataset",
]

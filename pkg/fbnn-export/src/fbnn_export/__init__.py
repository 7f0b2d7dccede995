"""Export float-trained networks to the FBNN model container.

The package turns trained weight tensors (binary or ternary quantization)
into the sparse sign-network container consumed by the oblivious inference
engine, folding each batch-norm stage into an integer match-count
threshold.  It also ships an independent reference interpreter for the
container so exported files can be cross-checked without the engine.
"""

from .format import (
    ExportError,
    Model,
    bn_sign,
    conv1d,
    conv2d,
    fc,
    maxpool,
    output,
    read_model,
    write_model,
)
from .oracle import cross_oracle_infer
from .quantize import binarize, fold_threshold, ternarize
from .recipe import export_fbnn

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "Model",
    "binarize",
    "bn_sign",
    "conv1d",
    "conv2d",
    "cross_oracle_infer",
    "export_fbnn",
    "fc",
    "fold_threshold",
    "maxpool",
    "output",
    "read_model",
    "ternarize",
    "write_model",
]

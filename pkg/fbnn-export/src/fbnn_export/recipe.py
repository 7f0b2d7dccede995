"""Recipe-driven export: JSON description + weight arrays -> FBNN bytes.

A recipe is a plain dict (usually loaded from JSON):

    {
      "input_dims": [12, 3],          # (h1, ch) or (h1, h2, ch)
      "delta": 0.05,                  # default ternarization fraction
      "layers": [
        {"type": "conv1d", "weights": "c0", "kernel": 3,
         "stride": 1, "pad": "same",
         "mode": "ternary", "delta": 0.1,
         "bn_gamma": "c0_gamma", "bn_beta": "c0_beta"},
        {"type": "maxpool", "pool": 2},
        {"type": "fc", "weights": "f0", "mode": "binary",
         "bn_gamma": 1.0, "bn_beta": 0.0},
        {"type": "output", "weights": "out"}
      ]
    }

String values for "weights", "bn_gamma", and "bn_beta" name arrays in the
accompanying mapping (an opened .npz works directly); numbers for
"bn_gamma"/"bn_beta" broadcast to every unit.  Weight array shapes:

    conv1d   (g, kernel, in_ch)
    conv2d   (g, k1, k2, in_ch)
    fc       (units, fan_in)
    output   (classes, fan_in)

Convolution arrays are flattened per unit in C order, which lines the
links up tap-major/channel-minor exactly as the container expects.  Every
conv/fc layer needs bn_gamma and bn_beta (all scales positive); the batch
norm is folded into integer thresholds at export time, so the emitted
file contains a BN_SIGN layer right after each of them.  The output layer
takes no batch norm — it produces raw match-count scores.

"mode" selects the quantizer: "ternary" (default) drops links with
|w| < delta * max|w|, "binary" keeps every link.  The per-layer "delta"
overrides the recipe-level one (default 0.05).
"""

from __future__ import annotations

import numpy as np

from . import format as fmt
from .format import ExportError
from .quantize import binarize, fold_layer_thresholds, ternarize

_PAD_CODES = {"valid": fmt.PAD_VALID, "same": fmt.PAD_SAME}


def _array(arrays, key, where: str) -> np.ndarray:
    if not isinstance(key, str):
        raise ExportError(f"{where}: weights must name an array, got {key!r}")
    if key not in arrays:
        raise ExportError(f"{where}: no array named {key!r} in the weight bundle")
    return np.asarray(arrays[key], dtype=np.float64)


def _per_unit(spec, field, arrays, units: int, where: str) -> np.ndarray:
    if field not in spec:
        raise ExportError(f"{where}: missing {field!r} (required for folding batch norm)")
    value = spec[field]
    if isinstance(value, str):
        arr = _array(arrays, value, where)
    else:
        arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(units, float(arr))
    if arr.shape != (units,):
        raise ExportError(f"{where}: {field} has shape {arr.shape}, want ({units},)")
    return arr


def _quantize(spec, w: np.ndarray, default_delta: float, where: str):
    mode = spec.get("mode", "ternary")
    if mode == "ternary":
        return ternarize(w, float(spec.get("delta", default_delta)))
    if mode == "binary":
        return binarize(w)
    raise ExportError(f"{where}: unknown quantization mode {mode!r}")


def _positive_int(spec, field, where: str, default=None) -> int:
    value = spec.get(field, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ExportError(f"{where}: {field} must be a positive integer, got {value!r}")
    return value


def build_model(recipe: dict, arrays) -> fmt.Model:
    """Quantize per the recipe and assemble the container model."""
    input_dims = tuple(recipe.get("input_dims", ()))
    if len(input_dims) == 2:
        dim = 1
    elif len(input_dims) == 3:
        dim = 2
    else:
        raise ExportError(
            f"input_dims must be (h1, ch) or (h1, h2, ch), got {list(input_dims)}"
        )
    if not all(isinstance(d, int) and d > 0 for d in input_dims):
        raise ExportError(f"input_dims must be positive integers, got {list(input_dims)}")
    specs = recipe.get("layers", [])
    if not specs:
        raise ExportError("recipe has no layers")
    default_delta = float(recipe.get("delta", 0.05))

    model = fmt.Model(dim=dim, input_dims=input_dims, layers=[])
    shape = input_dims
    for i, spec in enumerate(specs):
        kind = spec.get("type")
        where = f"recipe layer {i} ({kind})"
        if kind == "conv1d":
            if dim != 1 or len(shape) != 2:
                raise ExportError(f"{where}: needs a 1D positional input")
            kernel = _positive_int(spec, "kernel", where)
            stride = _positive_int(spec, "stride", where, default=1)
            pad = _pad_code(spec, where)
            w = _array(arrays, spec.get("weights"), where)
            if w.ndim != 3 or w.shape[1] != kernel or w.shape[2] != shape[1]:
                raise ExportError(
                    f"{where}: weights shape {w.shape}, want (g, {kernel}, {shape[1]})"
                )
            trits, alpha = _quantize(spec, w.reshape(w.shape[0], -1), default_delta, where)
            model.layers.append(fmt.conv1d(w.shape[0], kernel, stride, pad, trits))
            _append_bn(model, spec, arrays, trits, alpha, where)
        elif kind == "conv2d":
            if dim != 2 or len(shape) != 3:
                raise ExportError(f"{where}: needs a 2D positional input")
            kernel = spec.get("kernel")
            if isinstance(kernel, int):
                kernel = (kernel, kernel)
            if not (isinstance(kernel, (list, tuple)) and len(kernel) == 2):
                raise ExportError(f"{where}: kernel must be an int or pair, got {kernel!r}")
            k1, k2 = int(kernel[0]), int(kernel[1])
            stride = _positive_int(spec, "stride", where, default=1)
            pad = _pad_code(spec, where)
            w = _array(arrays, spec.get("weights"), where)
            if w.ndim != 4 or w.shape[1:] != (k1, k2, shape[2]):
                raise ExportError(
                    f"{where}: weights shape {w.shape}, want (g, {k1}, {k2}, {shape[2]})"
                )
            trits, alpha = _quantize(spec, w.reshape(w.shape[0], -1), default_delta, where)
            model.layers.append(fmt.conv2d(w.shape[0], (k1, k2), stride, pad, trits))
            _append_bn(model, spec, arrays, trits, alpha, where)
        elif kind == "maxpool":
            model.layers.append(fmt.maxpool(_positive_int(spec, "pool", where)))
        elif kind in ("fc", "output"):
            size = 1
            for d in shape:
                size *= d
            w = _array(arrays, spec.get("weights"), where)
            if w.ndim != 2 or w.shape[1] != size:
                raise ExportError(f"{where}: weights shape {w.shape}, want (units, {size})")
            trits, alpha = _quantize(spec, w, default_delta, where)
            if kind == "fc":
                model.layers.append(fmt.fc(size, w.shape[0], trits))
                _append_bn(model, spec, arrays, trits, alpha, where)
            else:
                model.layers.append(fmt.output(size, w.shape[0], trits))
        else:
            raise ExportError(f"{where}: unknown layer type {kind!r}")
        # Advance the shape chain; walk_shapes re-validates the whole prefix
        # but the models are small and the errors carry layer context.
        shape = None
        for _i, _layer, _in, out in fmt.walk_shapes(model):
            shape = out
    return fmt.validate_model(model)


def _pad_code(spec, where: str) -> int:
    pad = spec.get("pad", "valid")
    if pad not in _PAD_CODES:
        raise ExportError(f"{where}: pad must be 'valid' or 'same', got {pad!r}")
    return _PAD_CODES[pad]


def _append_bn(model, spec, arrays, trits, alpha: float, where: str) -> None:
    units = len(trits)
    gammas = _per_unit(spec, "bn_gamma", arrays, units, where)
    betas = _per_unit(spec, "bn_beta", arrays, units, where)
    try:
        thresholds = fold_layer_thresholds(trits, gammas, betas, alpha)
    except ExportError as exc:
        raise ExportError(f"{where}: {exc}") from None
    model.layers.append(fmt.bn_sign(thresholds))


def export_fbnn(recipe: dict, arrays) -> bytes:
    """Quantize, fold, assemble, and serialize: the whole pipeline."""
    return fmt.write_model(build_model(recipe, arrays))

"""Weight quantization and batch-norm threshold folding.

Float weight tensors become sparse sign matrices in {-1, 0, +1} plus one
positive per-layer scale alpha (the mean magnitude of the kept weights).
The quantized layer computes alpha * (sign-network dot product), so alpha
never needs to exist at inference time: it is folded into the batch-norm
scale, which in turn is folded into an integer match-count threshold.

With x in {-1,+1}, live links L and match count c1 (links whose input sign
equals the weight sign), the dot product is alpha*(2*c1 - L) and the
batch-norm output is gamma*alpha*(2*c1 - L) + beta.  That is >= 0 exactly
when c1 >= (g*L - beta) / (2*g) with g = gamma*alpha, so each unit keeps a
single integer threshold t = ceil of that bound, clamped to [0, L+1]
(0 always fires, L+1 never fires).  The same fold, with the same floating-
point operations in the same order, is what the inference engine applies;
matching it exactly is what makes exported thresholds bit-for-bit
reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .format import ExportError


def _as_matrix(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        raise ExportError(f"weights must be a non-empty (units, fan_in) matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise ExportError("weights contain NaN or infinity")
    return w


def ternarize(weights, delta: float = 0.05):
    """Quantize a (units, fan_in) float matrix to ternary signs.

    A link is kept when |w| >= delta * max|w| (the max over the whole
    layer) and w != 0; kept links become sign(w), dropped links 0.  A unit
    whose links would all drop keeps its single largest-|w| link instead,
    so every unit stays connected.  Returns (trits rows, alpha) where
    alpha > 0 is the mean |w| over kept links.
    """
    w = _as_matrix(weights)
    if delta < 0:
        raise ExportError(f"ternarization fraction must be >= 0, got {delta}")
    mag = np.abs(w)
    peak = float(mag.max())
    if peak == 0.0:
        raise ExportError("layer has no nonzero weights")
    keep = (mag >= delta * peak) & (w != 0)
    for u in range(w.shape[0]):
        if not keep[u].any():
            if mag[u].max() == 0.0:
                raise ExportError(f"unit {u} has no nonzero weights")
            keep[u, int(mag[u].argmax())] = True
    alpha = float(mag[keep].mean())
    trits = np.where(keep, np.where(w > 0, 1, -1), 0)
    return [[int(t) for t in row] for row in trits], alpha


def binarize(weights):
    """Quantize a (units, fan_in) float matrix to dense signs.

    Every link stays live: w >= 0 becomes +1 (zero counts as positive),
    w < 0 becomes -1.  Returns (trits rows, alpha) with alpha = mean |w|
    over all links, which must be positive.
    """
    w = _as_matrix(weights)
    alpha = float(np.abs(w).mean())
    if alpha == 0.0:
        raise ExportError("layer has no nonzero weights")
    trits = np.where(w >= 0, 1, -1)
    return [[int(t) for t in row] for row in trits], alpha


def fold_threshold(gamma: float, beta: float, live: int) -> int:
    """Integer match-count threshold for one unit: fires iff c1 >= t.

    gamma is the effective batch-norm scale after absorbing the layer
    scale alpha (gamma_bn * alpha) and must be positive; beta is the
    batch-norm shift; live is the unit's live link count.
    """
    if gamma <= 0:
        raise ExportError(f"batch-norm scale must be positive, got {gamma}")
    if live < 0:
        raise ExportError(f"live link count must be non-negative, got {live}")
    t = math.ceil((gamma * live - beta) / (2.0 * gamma))
    return max(0, min(live + 1, t))


def fold_layer_thresholds(trits, gammas, betas, alpha: float) -> list:
    """Threshold per unit for a quantized layer.

    trits is the layer's sign matrix (rows = units); gammas/betas are the
    per-unit batch-norm parameters; alpha is the layer scale from
    quantization.  Each unit's threshold comes from fold_threshold with
    the effective scale gammas[u] * alpha.
    """
    units = len(trits)
    if len(gammas) != units or len(betas) != units:
        raise ExportError(
            f"batch-norm has {len(gammas)} scales / {len(betas)} shifts for {units} units"
        )
    thresholds = []
    for u, row in enumerate(trits):
        gamma = float(gammas[u])
        if gamma <= 0:
            raise ExportError(f"unit {u}: batch-norm scale must be positive, got {gamma}")
        live = sum(1 for t in row if t)
        thresholds.append(fold_threshold(gamma * alpha, float(betas[u]), live))
    return thresholds

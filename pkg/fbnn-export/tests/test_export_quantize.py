"""Quantizer and threshold-fold tests.

The threshold fold must match the inference engine's rule bit for bit,
so the engine is imported here (tests only — the package itself never
touches it) purely as the comparison target.
"""

import random

import numpy as np
import pytest

from fbnn_export import binarize, fold_threshold, ternarize
from fbnn_export.format import ExportError
from fbnn_export.quantize import fold_layer_thresholds

from obnn.compiler import quantize_threshold


def test_ternarize_hand_case():
    w = [[0.9, -0.2, 0.05], [-1.0, 0.5, -0.4]]
    trits, alpha = ternarize(w, delta=0.3)  # cut = 0.3
    assert trits == [[1, 0, 0], [-1, 1, -1]]
    assert alpha == pytest.approx((0.9 + 1.0 + 0.5 + 0.4) / 4)


def test_ternarize_drops_below_cut_keeps_at_cut():
    w = [[1.0, 0.5, 0.49999]]
    trits, _ = ternarize(w, delta=0.5)  # cut = 0.5: keep |w| >= 0.5
    assert trits == [[1, 1, 0]]


def test_larger_delta_never_keeps_more():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(6, 20))
    live = []
    for delta in (0.0, 0.1, 0.3, 0.6, 0.9):
        trits, alpha = ternarize(w, delta)
        assert alpha > 0
        live.append(sum(1 for row in trits for t in row if t))
    assert live == sorted(live, reverse=True)
    assert live[0] == w.size  # delta 0 keeps every nonzero link


def test_exact_zero_weight_never_kept():
    trits, _ = ternarize([[0.0, 0.7, -0.7]], delta=0.0)
    assert trits == [[0, 1, -1]]


def test_starved_unit_keeps_its_strongest_link():
    # Unit 1 falls entirely below the layer-wide cut; it must keep exactly
    # its largest-magnitude link rather than go dark.
    w = [[10.0, -8.0, 9.0], [0.1, -0.3, 0.2]]
    trits, _ = ternarize(w, delta=0.5)  # cut = 5.0
    assert trits[0] == [1, -1, 1]
    assert trits[1] == [0, -1, 0]


def test_all_zero_unit_rejected():
    with pytest.raises(ExportError, match="unit 1"):
        ternarize([[1.0, -1.0], [0.0, 0.0]], delta=0.1)


def test_all_zero_layer_rejected():
    with pytest.raises(ExportError, match="nonzero"):
        ternarize([[0.0, 0.0]], delta=0.0)
    with pytest.raises(ExportError, match="nonzero"):
        binarize([[0.0, 0.0]])


def test_negative_delta_rejected():
    with pytest.raises(ExportError, match="fraction"):
        ternarize([[1.0]], delta=-0.1)


def test_nan_weights_rejected():
    with pytest.raises(ExportError, match="NaN"):
        ternarize([[float("nan"), 1.0]], delta=0.1)


def test_binarize_all_positive_is_all_plus_one():
    w = np.abs(np.random.default_rng(5).normal(size=(3, 7))) + 0.01
    trits, alpha = binarize(w)
    assert all(t == 1 for row in trits for t in row)
    assert alpha == pytest.approx(float(np.abs(w).mean()))


def test_binarize_keeps_every_link_and_zero_counts_positive():
    trits, _ = binarize([[0.0, -0.5, 2.0]])
    assert trits == [[1, -1, 1]]


def test_fold_matches_engine_rule_bit_for_bit():
    rng = random.Random(11)
    for _ in range(2000):
        gamma = 10.0 ** rng.uniform(-3, 1)
        beta = rng.uniform(-40.0, 40.0)
        live = rng.randint(0, 64)
        assert fold_threshold(gamma, beta, live) == quantize_threshold(gamma, beta, live)


def test_fold_rejects_nonpositive_scale():
    for gamma in (0.0, -0.5):
        with pytest.raises(ExportError, match="positive"):
            fold_threshold(gamma, 0.0, 8)
        with pytest.raises(Exception, match="positive"):
            quantize_threshold(gamma, 0.0, 8)


def test_fold_clamps_to_fire_range():
    assert fold_threshold(1.0, 1000.0, 8) == 0  # huge shift: always fires
    assert fold_threshold(1.0, -1000.0, 8) == 9  # huge negative: never fires


def test_layer_fold_reproduces_float_batch_norm():
    # For the quantized layer (weights in {-alpha, 0, +alpha}) the folded
    # threshold must agree with evaluating the float batch norm directly:
    # fire iff gamma * alpha * (2*c1 - live) + beta >= 0.
    rng = random.Random(23)
    for _ in range(300):
        live = rng.randint(1, 24)
        row = [rng.choice((-1, 1)) for _ in range(live)] + [0] * rng.randint(0, 5)
        rng.shuffle(row)
        alpha = 10.0 ** rng.uniform(-2, 1)
        gamma = 10.0 ** rng.uniform(-2, 1)
        beta = rng.uniform(-3.0 * live, 3.0 * live)
        (t,) = fold_layer_thresholds([row], [gamma], [beta], alpha)
        for c1 in range(live + 1):
            fired = c1 >= t
            real = gamma * (alpha * (2 * c1 - live)) + beta >= 0
            assert fired == real, (gamma, beta, alpha, live, c1, t)


def test_layer_fold_rejects_nonpositive_gamma_per_unit():
    rows = [[1, -1], [1, 1]]
    with pytest.raises(ExportError, match="unit 1"):
        fold_layer_thresholds(rows, [1.0, -2.0], [0.0, 0.0], 1.0)


def test_layer_fold_checks_parameter_counts():
    with pytest.raises(ExportError, match="units"):
        fold_layer_thresholds([[1], [1]], [1.0], [0.0, 0.0], 1.0)

"""Analytic cost model: per-layer accounting, exact equal-cost rewrites,
and the pruning report."""

import pytest

from obnn.adders import ObcKind, predict_nonxor
from obnn.costs import (
    ArchDescriptor,
    ArchError,
    Stage,
    apply_move,
    arch_cost,
    conv1d_cost,
    conv2d_cost,
    enumerate_equal_cost_variants,
    link_reduction_report,
    validate_arch,
)
from obnn.model import gen_random_model

REFERENCE = {
    "dim": 1,
    "input_dims": [800, 5],
    "stages": [
        {"g": 20, "kernel": [10], "pool": 4},
        {"g": 20, "kernel": [10], "pool": 4},
        {"g": 20, "kernel": [10]},
        {"g": 20, "kernel": [10]},
        {"g": 20, "kernel": [10]},
    ],
}


def reference_arch():
    return ArchDescriptor.from_dict(REFERENCE)


class TestCostFormulas:
    def test_conv1d(self):
        assert conv1d_cost(800, 20, 10, 5) == 800_000
        assert conv1d_cost(1, 1, 1, 1) == 1

    def test_conv2d(self):
        assert conv2d_cost(32, 32, 8, 3, 4, 4) == 32 * 32 * 8 * 3 * 16

    def test_reference_layer_costs(self):
        report = arch_cost(reference_arch())
        assert [L["cost"] for L in report["layers"]] == [
            800_000, 800_000, 200_000, 200_000, 200_000,
        ]
        assert report["total"] == 2_200_000

    def test_pooling_shrinks_positions(self):
        report = arch_cost(reference_arch())
        assert [L["positions"] for L in report["layers"]] == [
            [800], [200], [50], [50], [50],
        ]

    def test_multi_layer_stage_uses_own_width_inside(self):
        arch = ArchDescriptor(1, (100, 4), [Stage(m=3, g=8, kernel=(5,))])
        report = arch_cost(arch)
        assert [L["in_channels"] for L in report["layers"]] == [4, 8, 8]


class TestValidation:
    def test_pool_divisibility(self):
        with pytest.raises(ArchError, match="divide"):
            validate_arch(ArchDescriptor(1, (10, 2), [Stage(1, 4, (3,), pool=3)]))

    def test_kernel_rank_must_match_dim(self):
        with pytest.raises(ArchError):
            validate_arch(ArchDescriptor(2, (8, 8, 3), [Stage(1, 4, (3,))]))

    def test_from_dict_rejects_garbage(self):
        with pytest.raises(ArchError):
            ArchDescriptor.from_dict({"dim": 1, "stages": []})

    def test_round_trip_dict(self):
        arch = reference_arch()
        again = ArchDescriptor.from_dict(arch.to_dict())
        assert again.to_dict() == arch.to_dict()


class TestMoves:
    def test_halve_kernel_preserves_total(self):
        arch = reference_arch()
        base = arch_cost(arch)["total"]
        for z in range(4):
            v = apply_move(arch, "halve_kernel", z)
            assert arch_cost(v)["total"] == base
            assert v.stages[z].g == 40 and v.stages[z].kernel == (5,)
            assert v.stages[z + 1].kernel == (5,)

    def test_double_kernel_preserves_total(self):
        arch = reference_arch()
        base = arch_cost(arch)["total"]
        for z in range(4):
            v = apply_move(arch, "double_kernel", z)
            assert arch_cost(v)["total"] == base
            assert v.stages[z].g == 10 and v.stages[z].kernel == (20,)
            assert v.stages[z + 1].kernel == (20,)

    def test_add_layer_preserves_total_and_width(self):
        arch = reference_arch()
        base = arch_cost(arch)["total"]
        # stage 2: e = 20, g = 20 -> intermediate 20*20/40 = 10
        v = apply_move(arch, "add_layer", 2)
        assert arch_cost(v)["total"] == base
        assert [s.g for s in v.stages] == [20, 20, 10, 20, 20, 20]

    def test_add_layer_first_stage(self):
        arch = reference_arch()
        # e = 5, g = 20 -> 100/25 = 4
        v = apply_move(arch, "add_layer", 0)
        assert v.stages[0].g == 4
        assert v.stages[1].pool == 4 and v.stages[0].pool is None
        assert arch_cost(v)["total"] == arch_cost(arch)["total"]

    def test_add_layer_non_integer_rejected(self):
        arch = ArchDescriptor(1, (96, 3), [Stage(1, 8, (4,)), Stage(1, 8, (4,))])
        with pytest.raises(ArchError, match="integer"):
            apply_move(arch, "add_layer", 0)  # 24/11

    def test_halve_needs_even_kernel(self):
        arch = ArchDescriptor(1, (90, 3), [Stage(1, 6, (3,)), Stage(1, 6, (4,))])
        with pytest.raises(ArchError, match="even"):
            apply_move(arch, "halve_kernel", 0)

    def test_last_stage_kernel_moves_rejected(self):
        arch = reference_arch()
        with pytest.raises(ArchError, match="downstream"):
            apply_move(arch, "halve_kernel", 4)

    def test_double_needs_even_kernel_count(self):
        arch = ArchDescriptor(1, (90, 3), [Stage(1, 5, (4,)), Stage(1, 6, (4,))])
        with pytest.raises(ArchError, match="odd"):
            apply_move(arch, "double_kernel", 0)

    def test_2d_moves(self):
        arch = ArchDescriptor.from_dict({
            "dim": 2,
            "input_dims": [32, 32, 3],
            "stages": [
                {"g": 8, "kernel": [4, 4], "pool": 2},
                {"g": 8, "kernel": [4, 4]},
            ],
        })
        base = arch_cost(arch)["total"]
        for move in ("halve_kernel", "double_kernel"):
            assert arch_cost(apply_move(arch, move, 0))["total"] == base


class TestEnumeration:
    def test_reference_arch_variant_set(self):
        variants, skipped = enumerate_equal_cost_variants(reference_arch())
        names = {v["move"] for v in variants}
        assert names == {
            *(f"halve_kernel@{z}" for z in range(4)),
            *(f"double_kernel@{z}" for z in range(4)),
            *(f"add_layer@{z}" for z in range(5)),
        }
        assert all(v["delta"] == 0 for v in variants)
        assert {s["move"] for s in skipped} == {"halve_kernel@4", "double_kernel@4"}

    def test_limit_respected(self):
        variants, _ = enumerate_equal_cost_variants(reference_arch(), limit=3)
        assert len(variants) == 3

    def test_move_filter(self):
        variants, _ = enumerate_equal_cost_variants(
            reference_arch(), moves=("add_layer",)
        )
        assert all(v["move"].startswith("add_layer") for v in variants)


class TestLinkReduction:
    def test_report_counts_and_projection(self):
        m = gen_random_model(1, (20, 2), [("fc", 8), ("out", 3)], sparsity=0.5, seed=4)
        report = link_reduction_report(m, ObcKind.LBA)
        assert report["obc"] == "lba"
        fc = report["layers"][0]
        assert fc["dense_links"] == 8 * 40
        assert fc["live_links"] == sum(
            1 for row in m.layers[0].weights for w in row if w
        )
        assert 0.0 < fc["saved_fraction"] < 1.0
        want_dense = sum(
            predict_nonxor(ObcKind.LBA, len(row)) for row in m.layers[0].weights
        )
        assert fc["dense_popcount_nonxor"] == want_dense
        assert fc["live_popcount_nonxor"] < want_dense

"""Analytic cost model and equal-cost architecture exploration.

Works on convolution-stage descriptors, not trained models: each stage
is one or more identical conv layers (g kernels of a given spatial
size), optionally followed by a pooling step.  The cost of a conv layer
is the number of secret multiplications it performs:

    1D: positions * kernels * kernel_size * in_channels
    2D: positions(both dims) * kernels * in_channels * k1 * k2

Three rewrites preserve total cost exactly while changing the shape:

* ``halve_kernel``  -- halve a stage's kernel size and double its kernel
  count; the next stage sees twice the channels, so its kernel size is
  halved to compensate.
* ``double_kernel`` -- the inverse: double kernel size, halve kernel
  count, double the next stage's kernel size.
* ``add_layer``     -- split a single-layer stage conv(g) into two
  stacked layers [conv(g'), conv(g)] with g' = g*e/(g+e) where e is the
  stage's input channel count; cost splits as h*c*g'*(e+g) = h*c*g*e.

Rewrites whose arithmetic does not land on integers are reported as
skipped with the reason, never silently dropped or rounded.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from obnn.adders import ObcKind, predict_nonxor
from obnn.model import CONV1D, CONV2D, FC, OUTPUT, BnnModel


class ArchError(ValueError):
    """Architecture descriptor is malformed or a rewrite is impossible."""


def conv1d_cost(positions: int, kernels: int, kernel_size: int, in_channels: int) -> int:
    return positions * kernels * kernel_size * in_channels


def conv2d_cost(pos1: int, pos2: int, kernels: int, in_channels: int,
                k1: int, k2: int) -> int:
    return pos1 * pos2 * kernels * in_channels * k1 * k2


@dataclass
class Stage:
    """One convolution stage: ``m`` identical layers, then optional pool."""

    m: int
    g: int
    kernel: tuple
    pool: int | None = None


@dataclass
class ArchDescriptor:
    dim: int
    input_dims: tuple
    stages: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "ArchDescriptor":
        try:
            dim = int(data["dim"])
            input_dims = tuple(int(v) for v in data["input_dims"])
            stages = [
                Stage(
                    m=int(s.get("m", 1)),
                    g=int(s["g"]),
                    kernel=tuple(int(k) for k in s["kernel"]),
                    pool=int(s["pool"]) if s.get("pool") else None,
                )
                for s in data["stages"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ArchError(f"bad architecture descriptor: {exc}") from exc
        arch = cls(dim, input_dims, stages)
        validate_arch(arch)
        return arch

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "input_dims": list(self.input_dims),
            "stages": [
                {
                    "m": s.m,
                    "g": s.g,
                    "kernel": list(s.kernel),
                    **({"pool": s.pool} if s.pool else {}),
                }
                for s in self.stages
            ],
        }


def validate_arch(arch: ArchDescriptor):
    if arch.dim not in (1, 2):
        raise ArchError(f"dim must be 1 or 2, got {arch.dim}")
    want = arch.dim + 1
    if len(arch.input_dims) != want:
        raise ArchError(f"{arch.dim}D input needs {want} dims")
    if any(d < 1 for d in arch.input_dims):
        raise ArchError("input dims must be positive")
    if not arch.stages:
        raise ArchError("architecture has no stages")
    spatial = list(arch.input_dims[:-1])
    for i, s in enumerate(arch.stages):
        if s.m < 1 or s.g < 1:
            raise ArchError(f"stage {i}: m and g must be positive")
        if len(s.kernel) != arch.dim or any(k < 1 for k in s.kernel):
            raise ArchError(f"stage {i}: kernel must be {arch.dim} positive ints")
        if s.pool is not None:
            if s.pool < 2:
                raise ArchError(f"stage {i}: pool must be >= 2")
            for d in spatial:
                if d % s.pool:
                    raise ArchError(
                        f"stage {i}: pool {s.pool} does not divide spatial dim {d}"
                    )
            spatial = [d // s.pool for d in spatial]


def arch_cost(arch: ArchDescriptor) -> dict:
    """Per-layer and total multiplication counts for a descriptor."""
    validate_arch(arch)
    spatial = list(arch.input_dims[:-1])
    channels = arch.input_dims[-1]
    layers = []
    total = 0
    for z, s in enumerate(arch.stages):
        stage_total = 0
        for rep in range(s.m):
            in_ch = channels if rep == 0 else s.g
            if arch.dim == 1:
                cost = conv1d_cost(spatial[0], s.g, s.kernel[0], in_ch)
            else:
                cost = conv2d_cost(
                    spatial[0], spatial[1], s.g, in_ch, s.kernel[0], s.kernel[1]
                )
            layers.append(
                {
                    "stage": z,
                    "layer": rep,
                    "positions": list(spatial),
                    "in_channels": in_ch,
                    "kernels": s.g,
                    "kernel": list(s.kernel),
                    "cost": cost,
                }
            )
            stage_total += cost
        channels = s.g
        if s.pool:
            spatial = [d // s.pool for d in spatial]
        total += stage_total
    return {"layers": layers, "total": total}


MOVES = ("halve_kernel", "double_kernel", "add_layer")


def _stage_in_channels(arch: ArchDescriptor, z: int) -> int:
    return arch.input_dims[-1] if z == 0 else arch.stages[z - 1].g


def _half_axis(kernel: tuple):
    """Which kernel axis an even halving can use (last axis preferred)."""
    for axis in range(len(kernel) - 1, -1, -1):
        if kernel[axis] % 2 == 0:
            return axis
    return None


def apply_move(arch: ArchDescriptor, move: str, z: int) -> ArchDescriptor:
    """Rewrite stage ``z``; raises ArchError when the move is illegal."""
    if move not in MOVES:
        raise ArchError(f"unknown move {move!r}")
    if not 0 <= z < len(arch.stages):
        raise ArchError(f"no stage {z}")
    new = copy.deepcopy(arch)
    stage = new.stages[z]

    if move == "add_layer":
        if stage.m != 1:
            raise ArchError("add_layer needs a single-layer stage")
        e = _stage_in_channels(new, z)
        num = stage.g * e
        den = stage.g + e
        if num % den:
            raise ArchError(
                f"intermediate width g*e/(g+e) = {num}/{den} is not an integer"
            )
        g_mid = num // den
        # split into [conv(g_mid), conv(g)]: model it as two stages so the
        # widths stay visible; the pool moves after the second layer.
        first = Stage(m=1, g=g_mid, kernel=stage.kernel, pool=None)
        second = Stage(m=1, g=stage.g, kernel=stage.kernel, pool=stage.pool)
        new.stages[z : z + 1] = [first, second]
        validate_arch(new)
        return new

    # kernel rewrites need a downstream conv stage to absorb the channel
    # change; the last stage's width is pinned by whatever consumes it.
    if z + 1 >= len(new.stages):
        raise ArchError("no downstream stage to compensate")
    nxt = new.stages[z + 1]
    if stage.m != 1 or nxt.m != 1:
        raise ArchError("kernel rewrites need single-layer stages")

    if move == "halve_kernel":
        axis = _half_axis(stage.kernel)
        if axis is None:
            raise ArchError(f"kernel {stage.kernel} has no even axis to halve")
        n_axis = _half_axis(nxt.kernel)
        if n_axis is None:
            raise ArchError(
                f"downstream kernel {nxt.kernel} has no even axis to halve"
            )
        k = list(stage.kernel)
        k[axis] //= 2
        stage.kernel = tuple(k)
        stage.g *= 2
        k = list(nxt.kernel)
        k[n_axis] //= 2
        nxt.kernel = tuple(k)
    else:  # double_kernel
        if stage.g % 2:
            raise ArchError(f"kernel count {stage.g} is odd, cannot halve")
        k = list(stage.kernel)
        k[-1] *= 2
        stage.kernel = tuple(k)
        stage.g //= 2
        k = list(nxt.kernel)
        k[-1] *= 2
        nxt.kernel = tuple(k)

    validate_arch(new)
    return new


def enumerate_equal_cost_variants(arch: ArchDescriptor, moves=MOVES, limit: int = 32):
    """All single-move rewrites of the descriptor.

    Returns (variants, skipped): variants are dicts with the move name,
    the rewritten descriptor, its total cost, and the delta against the
    base (always 0 by construction, asserted here); skipped records the
    illegal combinations and why.
    """
    validate_arch(arch)
    base = arch_cost(arch)["total"]
    variants, skipped = [], []
    for move in moves:
        if move not in MOVES:
            raise ArchError(f"unknown move {move!r}")
        for z in range(len(arch.stages)):
            if len(variants) >= limit:
                return variants, skipped
            try:
                rewritten = apply_move(arch, move, z)
            except ArchError as exc:
                skipped.append({"move": f"{move}@{z}", "reason": str(exc)})
                continue
            total = arch_cost(rewritten)["total"]
            if total != base:
                raise ArchError(
                    f"{move}@{z} changed total cost {base} -> {total}; "
                    "rewrite rules are broken"
                )
            variants.append(
                {
                    "move": f"{move}@{z}",
                    "arch": rewritten,
                    "total_cost": total,
                    "delta": total - base,
                }
            )
    return variants, skipped


def link_reduction_report(model: BnnModel, obc_kind=ObcKind.TA) -> dict:
    """How much pruning shrinks each weighted layer.

    Counts dense vs live links per layer and projects the per-unit
    popcount spend at full vs live fan-in (one application per unit; a
    conv unit pays this at every interior output position).
    """
    kind = ObcKind(getattr(obc_kind, "value", obc_kind))
    layers = []
    for index, layer in enumerate(model.layers):
        if layer.kind not in (CONV1D, CONV2D, FC, OUTPUT):
            continue
        dense = sum(len(row) for row in layer.weights)
        live = sum(1 for row in layer.weights for w in row if w)
        dense_nonxor = sum(predict_nonxor(kind, len(row)) for row in layer.weights)
        live_nonxor = sum(
            predict_nonxor(kind, sum(1 for w in row if w)) for row in layer.weights
        )
        layers.append(
            {
                "index": index,
                "kind": layer.kind_name,
                "units": len(layer.weights),
                "dense_links": dense,
                "live_links": live,
                "saved_fraction": 0.0 if not dense else 1.0 - live / dense,
                "dense_popcount_nonxor": dense_nonxor,
                "live_popcount_nonxor": live_nonxor,
            }
        )
    return {"obc": kind.value, "layers": layers}

"""Command-line export tool.

    fbnn-export export --recipe recipe.json --weights weights.npz --out model.fbnn
    fbnn-export infer  --model model.fbnn --input input.txt

`export` quantizes the float weights per the recipe, folds batch norms
into integer thresholds, and writes the FBNN container.  `infer` runs the
package's reference interpreter on a +-1 input file (whitespace-separated
+1/-1 tokens) and prints the class scores as JSON — handy for spot
checks without the inference engine.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import format as fmt
from .format import ExportError
from .oracle import cross_oracle_infer
from .recipe import build_model


def _live_stats(layer) -> tuple:
    total = sum(len(row) for row in layer.trits)
    live = sum(1 for row in layer.trits for t in row if t)
    return live, total


def cmd_export(args) -> int:
    with open(args.recipe, "r", encoding="utf-8") as fh:
        recipe = json.load(fh)
    if args.delta is not None:
        recipe["delta"] = args.delta
    with np.load(args.weights) as arrays:
        model = build_model(recipe, arrays)
    blob = fmt.write_model(model)
    with open(args.out, "wb") as fh:
        fh.write(blob)
    print(f"wrote {args.out}: {len(blob)} bytes, {len(model.layers)} layers")
    for i, layer in enumerate(model.layers):
        if layer.kind in fmt.WEIGHTED:
            live, total = _live_stats(layer)
            print(f"  layer {i} {layer.kind_name}: {live}/{total} links live")
        elif layer.kind == fmt.BN_SIGN:
            lo, hi = min(layer.thresholds), max(layer.thresholds)
            print(f"  layer {i} BN_SIGN: {len(layer.thresholds)} thresholds in [{lo}, {hi}]")
        elif layer.kind == fmt.MAXPOOL:
            print(f"  layer {i} MAXPOOL: pool {layer.pool}")
    return 0


def cmd_infer(args) -> int:
    with open(args.model, "rb") as fh:
        blob = fh.read()
    with open(args.input, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise ExportError(f"input file {args.input} must hold +1/-1 tokens") from None
    scores = cross_oracle_infer(blob, values)
    print(json.dumps({"scores": scores}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fbnn-export", description="Export trained weights to an FBNN model file."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="quantize weights and write an FBNN file")
    p.add_argument("--recipe", required=True, help="recipe JSON path")
    p.add_argument("--weights", required=True, help=".npz with the arrays the recipe names")
    p.add_argument("--out", required=True, help="output .fbnn path")
    p.add_argument(
        "--delta", type=float, default=None, help="override the recipe-level ternarization fraction"
    )
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("infer", help="run the reference interpreter on an input file")
    p.add_argument("--model", required=True, help=".fbnn path")
    p.add_argument("--input", required=True, help="text file of +1/-1 tokens")
    p.set_defaults(func=cmd_infer)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

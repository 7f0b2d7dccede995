"""Command-line front end.

Exit codes: 0 success, 1 verification mismatch, 2 usage or validation
error, 3 protocol or transport failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys
import time

from obnn.adders import (
    ObcKind,
    blb_bounds,
    build_popcount,
    lba_bounds,
    ta_count_formula,
)
from obnn.circuit import EVALUATOR, Circuit, parse_circuit
from obnn.compiler import (
    CompileError,
    argmax_score,
    class_fan_ins,
    compile_model,
    encode_activations,
    garbler_input_bits,
    plain_infer,
    plain_infer_trace,
    scores_from_output_bits,
)
from obnn.costs import ArchDescriptor, ArchError, arch_cost, enumerate_equal_cost_variants
from obnn.garble import GarbleError
from obnn.model import ModelError, gen_random_model, load_model, save_model
from obnn.ot import OT_PROVIDERS
from obnn.protocol import (
    loopback_session,
    run_evaluator,
    run_garbler,
)
from obnn.transport import ProtocolError, tcp_accept, tcp_connect, tcp_server


class UsageError(ValueError):
    pass


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _write_text(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _seed_from(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("OBNN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"OBNN_SEED={env!r} is not an integer") from None
    return None


def _parse_addr(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise UsageError(f"address must be host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise UsageError(f"port {port!r} is not an integer") from None


def _parse_dims(text: str):
    try:
        dims = tuple(int(d) for d in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"dims must look like 800x5 or 32x32x3, got {text!r}") from None
    if len(dims) == 2:
        return 1, dims
    if len(dims) == 3:
        return 2, dims
    raise UsageError(f"dims must have 2 or 3 components, got {text!r}")


def _parse_layer_descs(text: str):
    descs = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        name, sep, rest = part.partition(":")
        if not sep:
            raise UsageError(f"layer {part!r} must look like kind:args")
        try:
            nums = [int(v) for v in rest.split(",")]
        except ValueError:
            raise UsageError(f"layer {part!r} has non-integer arguments") from None
        if name == "conv" and len(nums) in (2, 3):
            descs.append(("conv", *nums))
        elif name == "pool" and len(nums) == 1:
            descs.append(("pool", nums[0]))
        elif name == "fc" and len(nums) == 1:
            descs.append(("fc", nums[0]))
        elif name == "out" and len(nums) == 1:
            descs.append(("out", nums[0]))
        else:
            raise UsageError(f"cannot parse layer {part!r}")
    if not descs:
        raise UsageError("no layers given")
    return descs


def _read_pm_input(path: str, size: int):
    tokens = _read_bytes(path).decode("utf-8").replace(",", " ").split()
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise UsageError(f"input file {path} has non-integer tokens") from None
    if len(values) != size:
        raise UsageError(f"input has {len(values)} values, model wants {size}")
    if any(v not in (-1, 1) for v in values):
        raise UsageError("input values must be +1 or -1")
    return values


def _emit_rows(fmt: str, header, rows, out=None):
    out = out or sys.stdout
    if fmt == "csv":
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    elif fmt == "json":
        json.dump([dict(zip(header, row)) for row in rows], out, indent=2)
        out.write("\n")
    else:  # table
        widths = [
            max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
            for i, h in enumerate(header)
        ]
        out.write("  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
        for row in rows:
            out.write(
                "  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip() + "\n"
            )


# -- subcommands ---------------------------------------------------------------


def cmd_compile(args) -> int:
    model = load_model(_read_bytes(args.model))
    circuit, io_map = compile_model(model, ObcKind(args.obc))
    if args.out:
        _write_text(args.out, circuit.serialize())
    rows = [
        (L["index"], L["kind"], L["nonxor"], L["xor"])
        for L in io_map["layers"]
    ]
    rows.append(("total", "", io_map["total_nonxor"], io_map["total_xor"]))
    if args.format == "json":
        payload = {
            "obc": io_map["obc"],
            "evaluator_inputs": io_map["evaluator_inputs"],
            "garbler_inputs": io_map["garbler_inputs"],
            "outputs": io_map["outputs"],
            "nonxor": io_map["total_nonxor"],
            "xor": io_map["total_xor"],
            "sha256": circuit.sha256().hex(),
            "layers": [
                {k: L[k] for k in ("index", "kind", "nonxor", "xor")}
                for L in io_map["layers"]
            ],
        }
        print(json.dumps(payload, indent=2))
    else:
        _emit_rows(args.format, ("layer", "kind", "nonxor", "xor"), rows)
        print(f"sha256 {circuit.sha256().hex()}")
    return 0


def cmd_bench_obc(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    kinds = [ObcKind(k.strip()) for k in args.kinds.split(",")]
    if any(n < 1 for n in sizes):
        raise UsageError("sizes must be positive")
    rng = random.Random(_seed_from(args))
    rows = []
    for n in sizes:
        for kind in kinds:
            circuit = Circuit()
            bits = [circuit.add_input(EVALUATOR) for _ in range(n)]
            out = build_popcount(circuit, bits, kind)
            for b in out.bits:
                circuit.mark_output(b)
            lower, upper = "", ""
            if kind is ObcKind.TA:
                if n & (n - 1) == 0:
                    exact = ta_count_formula(n)
                    lower = upper = exact
            elif kind is ObcKind.BLB:
                b = blb_bounds(n)
                lower, upper = b.lower, b.upper
            else:
                b = lba_bounds(n)
                lower, upper = b.lower, b.upper
            e_bits = [rng.randint(0, 1) for _ in range(n)]
            t0 = time.perf_counter()
            _, g_rep, _ = loopback_session(circuit, [], e_bits, ot="stub")
            wall_us = int((time.perf_counter() - t0) * 1e6)
            rows.append(
                (
                    n,
                    kind.value,
                    circuit.nonxor,
                    circuit.xor,
                    lower,
                    upper,
                    g_rep.bytes_sent + g_rep.bytes_received,
                    wall_us,
                )
            )
    _emit_rows(
        args.format,
        ("n", "kind", "nonxor", "xor", "lower_bound", "upper_bound", "bytes", "wall_us"),
        rows,
    )
    return 0


def _print_infer_result(args, scores, fan_ins, report):
    result = {
        "scores": scores,
        "argmax": argmax_score(scores, fan_ins),
        "report": report.to_dict(),
    }
    if args.report:
        _write_text(args.report, json.dumps(report.to_dict(), indent=2) + "\n")
    if args.format == "json":
        print(json.dumps(result, indent=2))
    else:
        print("scores " + " ".join(str(s) for s in scores))
        print(f"argmax {result['argmax']}")
        rep = report.to_dict()
        print(" ".join(f"{k}={rep[k]}" for k in rep))


def cmd_infer(args) -> int:
    model = load_model(_read_bytes(args.model))
    circuit, io_map = compile_model(model, ObcKind(args.obc))
    fan_ins = class_fan_ins(model)
    seed = _seed_from(args)

    need_input = args.role in ("local", "evaluator")
    pm = None
    if need_input:
        if args.input:
            pm = _read_pm_input(args.input, model.input_size)
        elif args.random_input:
            rng = random.Random(seed)
            pm = [rng.choice((-1, 1)) for _ in range(model.input_size)]
        else:
            raise UsageError("evaluator needs --input FILE or --random-input")

    if args.role == "local":
        bits, g_rep, e_rep = loopback_session(
            circuit,
            garbler_input_bits(model),
            encode_activations(pm),
            ot=args.ot,
        )
        scores = scores_from_output_bits(io_map, bits)
        _print_infer_result(args, scores, fan_ins, e_rep)
        return 0

    if not args.addr:
        raise UsageError(f"role {args.role} needs --addr host:port")
    host, port = _parse_addr(args.addr)
    if args.role == "garbler":
        server = tcp_server(host, port)
        print(f"listening on {server.getsockname()[0]}:{server.getsockname()[1]}",
              file=sys.stderr)
        transport = tcp_accept(server)
        try:
            report = run_garbler(
                transport, circuit, garbler_input_bits(model), ot=args.ot
            )
        finally:
            transport.close()
            server.close()
        rep = report.to_dict()
        if args.report:
            _write_text(args.report, json.dumps(rep, indent=2) + "\n")
        print(json.dumps(rep, indent=2) if args.format == "json"
              else " ".join(f"{k}={rep[k]}" for k in rep))
        return 0

    # evaluator
    transport = tcp_connect(host, port)
    try:
        bits, report = run_evaluator(
            transport, circuit, encode_activations(pm), ot=args.ot
        )
    finally:
        transport.close()
    scores = scores_from_output_bits(io_map, bits)
    _print_infer_result(args, scores, fan_ins, report)
    return 0


def _localize_fault(model, run_model, faulty_circuit, faulty_io, pm):
    """First layer/unit where the compiled circuit diverges from the model.

    Replays the circuit in the clear with each layer's wires promoted to
    outputs and compares against the reference trace layer by layer.
    """
    gbits = garbler_input_bits(run_model)
    ebits = encode_activations(pm)
    trace = plain_infer_trace(model, pm)
    t = 0
    for L in faulty_io["layers"]:
        if not L["wires"] or L["kind"] == "BN_SIGN":
            continue
        if L["kind"] == "OUTPUT":
            break
        expected = trace[t]
        t += 1
        got = _eval_wires(faulty_circuit, gbits, ebits, L["wires"])
        for unit, (g, e) in enumerate(zip(got, expected)):
            if (1 if g else -1) != e:
                return L["index"], L["kind"], unit
    return None


def _eval_wires(circuit, gbits, ebits, wires):
    text = circuit.serialize()
    lines = text.splitlines()
    lines[-1] = "OUT " + " ".join(str(w) for w in wires)
    header = lines[0].split()
    header[4] = str(len(wires))
    lines[0] = " ".join(header)
    probe = parse_circuit("\n".join(lines) + "\n")
    return probe.eval_plain(gbits, ebits)


def _inject_threshold_fault(run_model, rng):
    """Force one unit of the last pre-output stage to the opposite
    saturation (always fire vs never fire), so random trials expose it.

    Picks the final BN_SIGN layer; when an OUTPUT layer consumes its
    units directly, only units with a live outgoing link qualify.
    """
    li = max(
        i for i, L in enumerate(run_model.layers) if L.kind_name == "BN_SIGN"
    )
    layer = run_model.layers[li]
    prev = run_model.layers[li - 1]
    candidates = list(range(len(layer.thresholds)))
    nxt = run_model.layers[li + 1]
    if nxt.kind_name == "OUTPUT" and len(nxt.weights[0]) == len(candidates):
        live = [
            u for u in candidates if any(row[u] != 0 for row in nxt.weights)
        ]
        if live:
            candidates = live
    ui = rng.choice(candidates)
    lv = sum(1 for w in prev.weights[ui] if w != 0)
    old = layer.thresholds[ui]
    new = lv + 1 if 2 * old <= lv + 1 else 0
    layer.thresholds[ui] = new
    return li, ui, old, new


def cmd_verify(args) -> int:
    model = load_model(_read_bytes(args.model))
    seed = _seed_from(args)
    rng = random.Random(seed)

    run_model = model
    if args.inject_fault:
        run_model = load_model(save_model(model))
        li, ui, old, new = _inject_threshold_fault(run_model, rng)
        print(
            f"injected fault: layer {li} unit {ui} threshold {old} -> {new}",
            file=sys.stderr,
        )

    circuit, io_map = compile_model(run_model, ObcKind(args.obc))
    if args.trials < 1:
        print("warning: 0 trials requested, nothing verified", file=sys.stderr)
        print("verify PASS (vacuous)")
        return 0

    for trial in range(args.trials):
        pm = [rng.choice((-1, 1)) for _ in range(model.input_size)]
        want = plain_infer(model, pm)
        bits, _, _ = loopback_session(
            circuit,
            garbler_input_bits(run_model),
            encode_activations(pm),
            ot=args.ot,
            seed=rng.randrange(2**62).to_bytes(16, "little") if seed is not None else None,
        )
        got = scores_from_output_bits(io_map, bits)
        if got != want:
            bad = [i for i, (a, b) in enumerate(zip(got, want)) if a != b]
            print(
                f"verify FAIL at trial {trial}: classes {bad} "
                f"(garbled {got}, reference {want})"
            )
            where = _localize_fault(model, run_model, circuit, io_map, pm)
            if where:
                print(f"first divergence: layer {where[0]} ({where[1]}) unit {where[2]}")
            return 1
    print(f"verify PASS ({args.trials} trials)")
    return 0


def cmd_gen_model(args) -> int:
    dim, dims = _parse_dims(args.dims)
    descs = _parse_layer_descs(args.layers)
    seed = _seed_from(args)
    model = gen_random_model(
        dim, dims, descs, sparsity=args.sparsity, seed=seed if seed is not None else 0
    )
    blob = save_model(model)
    try:
        with open(args.out, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from None
    total_links = sum(
        sum(1 for row in L.weights for w in row if w)
        for L in model.layers
        if L.weights
    )
    print(
        f"wrote {args.out}: {len(blob)} bytes, {len(model.layers)} layers, "
        f"{model.input_size} inputs, {model.class_count} classes, "
        f"{total_links} live links"
    )
    return 0


def cmd_explore(args) -> int:
    try:
        arch = ArchDescriptor.from_dict(json.loads(_read_bytes(args.arch)))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.arch} is not valid JSON: {exc}") from None
    moves = tuple(m.strip() for m in args.moves.split(",")) if args.moves else None
    base = arch_cost(arch)
    variants, skipped = enumerate_equal_cost_variants(
        arch, moves=moves or ("halve_kernel", "double_kernel", "add_layer"),
        limit=args.limit,
    )
    if args.format == "json":
        print(
            json.dumps(
                {
                    "base_cost": base["total"],
                    "variants": [
                        {
                            "variant": v["move"],
                            "total_cost": v["total_cost"],
                            "delta": v["delta"],
                            "arch": v["arch"].to_dict(),
                        }
                        for v in variants
                    ],
                    "skipped": skipped,
                },
                indent=2,
            )
        )
        return 0
    rows = [(v["move"], v["total_cost"], v["delta"]) for v in variants]
    _emit_rows(args.format, ("variant", "total_cost", "delta"), rows)
    for s in skipped:
        print(f"skipped {s['move']}: {s['reason']}", file=sys.stderr)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obnn",
        description="Oblivious inference for binarized neural networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, fmt_default="table"):
        p.add_argument("--seed", type=int, default=None,
                       help="deterministic seed (or env OBNN_SEED)")
        p.add_argument("--format", choices=("table", "csv", "json"),
                       default=fmt_default)

    p = sub.add_parser("compile", help="lower a model file to a boolean circuit")
    p.add_argument("--model", required=True)
    p.add_argument("--obc", choices=[k.value for k in ObcKind], default="lba")
    p.add_argument("--out", help="write the circuit text here")
    add_common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("bench-obc", help="gate counts and session cost per popcount")
    p.add_argument("--sizes", default="250,500,1000,2000")
    p.add_argument("--kinds", default="ta,blb,lba")
    add_common(p, fmt_default="csv")
    p.set_defaults(func=cmd_bench_obc)

    p = sub.add_parser("infer", help="run an oblivious inference session")
    p.add_argument("--model", required=True)
    p.add_argument("--obc", choices=[k.value for k in ObcKind], default="lba")
    p.add_argument("--role", choices=("local", "garbler", "evaluator"),
                   default="local")
    p.add_argument("--addr", help="host:port for tcp roles")
    p.add_argument("--input", help="file of +-1 values in raster order")
    p.add_argument("--random-input", action="store_true")
    p.add_argument("--ot", choices=sorted(OT_PROVIDERS), default="dh")
    p.add_argument("--report", help="write the session report JSON here")
    add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("verify", help="compare garbled against clear inference")
    p.add_argument("--model", required=True)
    p.add_argument("--obc", choices=[k.value for k in ObcKind], default="lba")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--ot", choices=sorted(OT_PROVIDERS), default="stub")
    p.add_argument("--inject-fault", action="store_true",
                   help="perturb one threshold to demonstrate detection")
    add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-model", help="generate a random model file")
    p.add_argument("--dims", required=True, help="input dims, e.g. 800x5 or 32x32x3")
    p.add_argument("--layers", required=True,
                   help="e.g. conv:20,10;pool:4;fc:128;out:10")
    p.add_argument("--sparsity", type=float, default=0.0)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("explore", help="equal-cost architecture rewrites")
    p.add_argument("--arch", required=True, help="architecture descriptor JSON")
    p.add_argument("--moves", default=None,
                   help="comma list of halve_kernel,double_kernel,add_layer")
    p.add_argument("--limit", type=int, default=32)
    add_common(p, fmt_default="csv")
    p.set_defaults(func=cmd_explore)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProtocolError, GarbleError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ModelError, CompileError, ArchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

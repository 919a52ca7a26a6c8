"""``gpmatch`` command line."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import barrington as bt
from . import bench
from . import protocols as pr
from .blinding import SEED_ENV, RandomTape, TapeExhausted, parse_seed
from .circuit import CircuitError, load_circuit
from .s5 import Perm, is_five_cycle

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _emit(args: argparse.Namespace, stats: dict, text: str) -> None:
    if args.json:
        print(json.dumps({"schema": bench.SCHEMA, **stats}, sort_keys=True))
    else:
        print(text)


def _metadata(text: str) -> list[int]:
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"metadata must be a string of 0/1, got {text!r}")
    return [int(c) for c in text]


def _tape_factory(args: argparse.Namespace, allow_random: bool = False) -> tuple[Callable[[], RandomTape], bytes]:
    """A fresh-tape factory (both parties start at offset 0) and its identity bytes."""
    if args.tape and args.seed:
        raise UsageError("give --seed or --tape, not both")
    if args.tape:
        data = Path(args.tape).read_bytes()
        return (lambda: RandomTape(data=data)), data
    text = args.seed or os.environ.get(SEED_ENV)
    if text:
        try:
            seed = parse_seed(text)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        return (lambda: RandomTape.from_seed(seed)), seed
    if allow_random:
        seed = os.urandom(32)
        return (lambda: RandomTape.from_seed(seed)), seed
    raise UsageError(f"need --seed, --tape or {SEED_ENV}")


def _session_id(args: argparse.Namespace, secret: bytes) -> bytes:
    if args.session:
        try:
            sid = bytes.fromhex(args.session)
        except ValueError:
            sid = b""
        if len(sid) != 16:
            raise UsageError("--session must be 32 hex characters")
        return sid
    return hashlib.sha256(b"gpmatch-session" + secret).digest()[:16]


def _endpoint(args: argparse.Namespace) -> tuple[str, int]:
    return args.host, args.port


# -------------------------------------------------------------- subcommands

def cmd_compile(args: argparse.Namespace) -> int:
    circuit = load_circuit(args.circuit)
    try:
        target = Perm.parse(args.target_cycle)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not is_five_cycle(target):
        raise UsageError(f"{target} is not a 5-cycle")
    prog = bt.transform(circuit, target) if args.form == "gp" else bt.transform_alpha_one(circuit, target)
    stats = {
        "form": args.form,
        "depth": circuit.depth,
        "length": len(prog),
        "inputs": list(circuit.inputs),
        "target": str(target),
        "sha256": bt.program_digest(prog),
    }
    if args.out:
        with open(args.out, "wb") as fh:
            stats["bytes"] = bt.write_program(prog, fh)
        stats["out"] = args.out
    _emit(args, stats, "\n".join(f"{k}: {v}" for k, v in stats.items()))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    predicate = load_circuit(args.predicate)
    metadata = _metadata(args.metadata)
    n = args.n if args.n is not None else len(metadata)
    if len(metadata) != n:
        raise UsageError(f"--metadata has {len(metadata)} bits, --n is {n}")
    depth = args.depth if args.depth is not None else predicate.depth
    new_tape, secret = _tape_factory(args, allow_random=True)
    structure = pr.negotiate_structure(args.variant, n, depth)
    sid = _session_id(args, secret)
    sub = pr.subscriber_share(structure, predicate, new_tape(), sid)
    pub = pr.publisher_share(structure, metadata, new_tape(), sid)
    result = pr.broker_match(structure, pub, sub)
    word = "match" if result.matched else "no match"
    stats = {
        "variant": args.variant,
        "n": n,
        "D": depth,
        "total_slots": structure.total_slots,
        "length": structure.length,
        "matched": result.matched,
        "broker_value": str(result.broker_value),
        "flags": result.flags,
    }
    _emit(args, stats, word)
    if args.expect is not None and (args.expect == "match") != bool(result.matched):
        print(f"expected {args.expect}, got {word}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_broker(args: argparse.Namespace) -> int:
    import asyncio

    from .net.broker import serve

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    try:
        asyncio.run(serve(args.host, args.port))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_publish(args: argparse.Namespace) -> int:
    from .net.client import publish

    metadata = _metadata(args.metadata)
    new_tape, secret = _tape_factory(args)
    payload = Path(args.payload).read_bytes() if args.payload else args.message.encode()
    result = publish(_endpoint(args), metadata, payload, new_tape(), _session_id(args, secret))
    word = "match" if result.matched else "no match"
    _emit(args, {"matched": result.matched, "broker_value": str(result.broker_value)}, word)
    return EXIT_OK


def cmd_subscribe(args: argparse.Namespace) -> int:
    from .net.client import subscribe

    predicate = load_circuit(args.predicate)
    new_tape, secret = _tape_factory(args)
    got = subscribe(
        _endpoint(args), predicate, new_tape(), _session_id(args, secret), args.variant, args.depth
    )
    if got.payload is not None and args.out:
        Path(args.out).write_bytes(got.payload)
    word = "match" if got.result.matched else "no match"
    stats = {
        "matched": got.result.matched,
        "broker_value": str(got.result.broker_value),
        "payload_bytes": None if got.payload is None else len(got.payload),
    }
    text = word if got.payload is None or args.out else f"{word}\n{got.payload.decode(errors='replace')}"
    _emit(args, stats, text)
    return EXIT_OK


def cmd_bench_hamming(args: argparse.Namespace) -> int:
    rows = bench.bench_hamming(args.max_n, use_table_depths=not args.measured,
                               budget=int(args.budget), execute=not args.no_execute)
    stats: dict = {"rows": [r.as_dict() for r in rows]}
    text = bench.format_rows(rows)
    executed = [r for r in rows if r.measured_ms is not None and r.L >= 1 << 16]
    if executed:
        ns, dev = bench.linear_fit(rows)
        far = ns * 1e-6 * bench.ofsgp_length(16, 16)
        stats.update(ns_per_element=ns, max_deviation=dev, extrapolated_ms_n16=far)
        text += f"\n\n{ns:.1f} ns/element (max deviation {dev:.1%}); n=16, d=16 would take ~{far / 1e3:,.0f} s"
    _emit(args, stats, text)
    return EXIT_OK


def cmd_bench_lengths(args: argparse.Namespace) -> int:
    report = bench.bench_lengths(args.variant, args.n, args.depth)
    _emit(args, report, "\n".join(f"{k}: {v}" for k, v in report.items() if k != "schema"))
    return EXIT_OK if report["ok"] else EXIT_RUNTIME


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable stats on stdout")

    tape = argparse.ArgumentParser(add_help=False)
    tape.add_argument("--seed", help=f"64 hex chars (or set {SEED_ENV})")
    tape.add_argument("--tape", help="file of shared random bytes")
    tape.add_argument("--session", help="32 hex chars; derived from the seed/tape if omitted")

    net = argparse.ArgumentParser(add_help=False)
    net.add_argument("--host", default="127.0.0.1")
    net.add_argument("--port", type=int, default=7120)

    variant = argparse.ArgumentParser(add_help=False)
    variant.add_argument("--variant", choices=pr.VARIANTS, default=pr.OFSGP)

    p = argparse.ArgumentParser(prog="gpmatch", description="Group-program matching over S5.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", parents=[common], help="circuit file -> group program")
    c.add_argument("--circuit", required=True)
    c.add_argument("--target-cycle", default="(2 3 4 5 1)")
    c.add_argument("--form", choices=("gp", "aop"), default="gp")
    c.add_argument("--out", help="write a GPS5 program file")
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("simulate", parents=[common, tape, variant], help="in-process three-party run")
    s.add_argument("--predicate", required=True)
    s.add_argument("--metadata", required=True, help="publisher bits, e.g. 1011")
    s.add_argument("--n", type=int)
    s.add_argument("--depth", type=int, help="depth bound D (default: predicate depth)")
    s.add_argument("--expect", choices=("match", "nomatch"))
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("broker", parents=[net], help="run the broker service")
    b.set_defaults(func=cmd_broker)

    pub = sub.add_parser("publish", parents=[common, tape, net], help="publish metadata and a payload")
    pub.add_argument("--metadata", required=True)
    group = pub.add_mutually_exclusive_group(required=True)
    group.add_argument("--payload", help="file to forward on match")
    group.add_argument("--message", help="text to forward on match")
    pub.set_defaults(func=cmd_publish)

    sb = sub.add_parser("subscribe", parents=[common, tape, net, variant], help="subscribe with a predicate")
    sb.add_argument("--predicate", required=True)
    sb.add_argument("--depth", type=int)
    sb.add_argument("--out", help="write the forwarded payload here")
    sb.set_defaults(func=cmd_subscribe)

    be = sub.add_parser("bench", help="benchmarks")
    bsub = be.add_subparsers(dest="bench", required=True)
    h = bsub.add_parser("hamming", parents=[common], help="Hamming-distance lengths and timings")
    mode = h.add_mutually_exclusive_group()
    mode.add_argument("--table", action="store_true", help="published depths (default)")
    mode.add_argument("--measured", action="store_true", help="depths of our own circuits")
    h.add_argument("--max-n", type=int, default=16)
    h.add_argument("--budget", type=float, default=bench.DEFAULT_BUDGET)
    h.add_argument("--no-execute", action="store_true", help="lengths only")
    h.set_defaults(func=cmd_bench_hamming)
    ln = bsub.add_parser("lengths", parents=[common, variant], help="slot-count laws")
    ln.add_argument("--n", type=int, required=True)
    ln.add_argument("--depth", type=int, required=True)
    ln.set_defaults(func=cmd_bench_lengths)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with 2
    except (CircuitError, pr.ProtocolError, TapeExhausted, OSError, ValueError, RuntimeError) as exc:
        print(f"gpmatch: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

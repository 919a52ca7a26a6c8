"""Benchmarks: Hamming-distance matching lengths/timings and slot-count laws."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import protocols as pr
from .blinding import RandomTape
from .builders import (
    bose_nelson,
    build_hamming,
    build_ugp_circuit,
    ceil_lg,
    network_depth,
    ugp_quoted_depth_bound,
)
from .circuit import evaluate

SCHEMA = 1
DEFAULT_BUDGET = 10**7

# Published Hamming rows: n, circuit depth d, OFSGP sequence length as printed
TABLE2: tuple[tuple[int, int, str], ...] = (
    (2, 5, "4096"),
    (3, 8, "393216"),
    (4, 8, "524288"),
    (5, 12, "1.68e8"),
    (6, 12, "2.01e8"),
    (7, 13, "9.4e8"),
    (8, 13, "1.07e9"),
    (9, 16, "7.73e10"),
    (10, 16, "8.59e10"),
    (11, 16, "9.45e10"),
    (12, 16, "1.03e11"),
    (13, 16, "1.12e11"),
    (14, 16, "1.2e11"),
    (15, 16, "1.29e11"),
    (16, 16, "1.37e11"),
)


def hamming_depth(n: int) -> int:
    """Depth of the Bose-Nelson network, which bounds every threshold's circuit."""
    return network_depth(bose_nelson(n), n)


def ofsgp_length(n: int, d: int) -> int:
    return 2 * n * 4**d


def matches_printed(value: int, printed: str) -> bool:
    """Integer equality for plain entries, equality at printed precision otherwise."""
    if "e" not in printed:
        return value == int(printed)
    mantissa, exponent = printed.split("e")
    digits = len(mantissa.replace(".", "")) - 1
    scaled = value / 10 ** int(exponent)
    return round(scaled, digits) == float(mantissa)


@dataclass
class BenchRow:
    n: int
    d: int
    L: int
    measured_ms: Optional[float] = None
    source: str = "table"
    printed: Optional[str] = None
    hamming_depth: Optional[int] = None

    def as_dict(self) -> dict:
        return asdict(self)


def time_broker(n: int, d: int, repeats: int = 3, rng: Optional[np.random.Generator] = None) -> float:
    """Best-of-``repeats`` broker_match time in ms for a random Hamming session."""
    rng = rng or np.random.default_rng(0)
    bits = rng.integers(0, 2, n).tolist()
    threshold = int(rng.integers(0, max(1, math.floor(math.log2(n))) + 1))
    predicate = build_hamming(bits, threshold)
    metadata = rng.integers(0, 2, n).tolist()
    structure = pr.negotiate_structure(pr.OFSGP, n, d)
    seed = rng.bytes(32)
    sub = pr.subscriber_share(structure, predicate, RandomTape.from_seed(seed))
    pub = pr.publisher_share(structure, metadata, RandomTape.from_seed(seed))
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        result = pr.broker_match(structure, pub, sub)
        best = min(best, time.perf_counter() - start)
    expected = evaluate(predicate, {f"x{i}": v for i, v in enumerate(metadata)})
    if result.matched != expected:
        raise AssertionError(f"broker disagrees with direct evaluation at n={n}, d={d}")
    return best * 1e3


def bench_hamming(
    max_n: int = 16,
    use_table_depths: bool = True,
    budget: int = DEFAULT_BUDGET,
    execute: bool = True,
    repeats: int = 3,
) -> list[BenchRow]:
    if not 2 <= max_n <= 16:
        raise ValueError("max_n must be in 2..16")
    rows = []
    rng = np.random.default_rng(2024)
    for n, table_d, printed in TABLE2:
        if n > max_n:
            break
        hd = hamming_depth(n)
        d = table_d if use_table_depths else hd
        row = BenchRow(n, d, ofsgp_length(n, d), source="table" if use_table_depths else "measured",
                       printed=printed if use_table_depths else None, hamming_depth=hd)
        if execute and row.L <= budget and hd <= d:
            row.measured_ms = time_broker(n, d, repeats, rng)
        rows.append(row)
    return rows


def per_element_ns(rows: list[BenchRow], min_len: int = 1 << 16) -> list[float]:
    return [r.measured_ms * 1e6 / r.L for r in rows if r.measured_ms is not None and r.L >= min_len]


def linear_fit(rows: list[BenchRow], min_len: int = 1 << 16) -> tuple[float, float]:
    """Median ns per element over large executed rows, and the worst relative deviation."""
    rates = per_element_ns(rows, min_len)
    if not rates:
        raise ValueError("no executed rows above the size threshold")
    mid = float(np.median(rates))
    return mid, max(abs(r / mid - 1) for r in rates)


def bench_lengths(variant: str, n: int, depth_bound: int) -> dict:
    """Constructed slot counts against the closed forms."""
    report = {"schema": SCHEMA, "variant": variant, "n": n, "D": depth_bound}
    if variant == pr.UGP:
        circuit = build_ugp_circuit(n, 4**depth_bound)
        lg = ceil_lg(n)
        kappa = depth_bound / lg if lg else float(depth_bound)
        bound = ugp_quoted_depth_bound(n, kappa)
        report.update(
            depth=circuit.depth,
            length=4**circuit.depth,
            depth_bound_quoted=bound,
            ok=circuit.depth <= bound + 2,
        )
        return report
    s = pr.negotiate_structure(variant, n, depth_bound)
    expected = (2 * n if variant == pr.OFSGP else 4 * n * n) * 4**depth_bound
    measured = s.publisher_slots if variant == pr.OFSGP else s.length
    report.update(
        publisher_slots=s.publisher_slots,
        length=s.length,
        total_slots=s.total_slots,
        expected=expected,
        ok=measured == expected,
    )
    return report


def format_rows(rows: list[BenchRow]) -> str:
    head = f"{'n':>3} {'d':>3} {'L = 2n*4^d':>16} {'printed':>9} {'own depth':>9} {'broker ms':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        ms = f"{r.measured_ms:10.2f}" if r.measured_ms is not None else f"{'-':>10}"
        lines.append(
            f"{r.n:>3} {r.d:>3} {r.L:>16,} {r.printed or '-':>9} {r.hamming_depth!s:>9} {ms}"
        )
    return "\n".join(lines)

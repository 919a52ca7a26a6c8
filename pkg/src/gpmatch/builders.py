"""Concrete circuits used by the match protocols and the benchmark."""
from __future__ import annotations

import math
from typing import Sequence

from .circuit import AND, OR, Circuit, CircuitBuilder, CircuitError
from .s5 import ALPHA

# unary[i][j] is the node asserting g(i+1) == j+1
Unary = list[list[int]]


class BadThreshold(CircuitError):
    pass


class BadShape(CircuitError):
    pass


def ceil_lg(n: int) -> int:
    return max(0, (n - 1).bit_length())


# ---------------------------------------------------------- sorting network

def bose_nelson(n: int) -> list[tuple[int, int]]:
    """Bose-Nelson sorting network on wires 0..n-1 as (low, high) comparators."""
    if n < 1:
        raise ValueError("need at least one wire")
    out: list[tuple[int, int]] = []

    def merge(i: int, x: int, j: int, y: int) -> None:
        if x == 1 and y == 1:
            out.append((i, j))
        elif x == 1 and y == 2:
            out.append((i, j + 1))
            out.append((i, j))
        elif x == 2 and y == 1:
            out.append((i, j))
            out.append((i + 1, j))
        else:
            a = x // 2
            b = y // 2 if x % 2 else (y + 1) // 2
            merge(i, a, j, b)
            merge(i + a, x - a, j + b, y - b)
            merge(i + a, x - a, j, b)

    def sort(i: int, m: int) -> None:
        if m > 1:
            a = m // 2
            sort(i, a)
            sort(i + a, m - a)
            merge(i, a, i + a, m - a)

    sort(0, n)
    return out


build_bose_nelson = bose_nelson


def apply_network(network: Sequence[tuple[int, int]], values: Sequence[int]) -> list[int]:
    v = list(values)
    for lo, hi in network:
        if v[lo] > v[hi]:
            v[lo], v[hi] = v[hi], v[lo]
    return v


def network_depth(network: Sequence[tuple[int, int]], n: int) -> int:
    level = [0] * n
    for lo, hi in network:
        level[lo] = level[hi] = max(level[lo], level[hi]) + 1
    return max(level, default=0)


# ------------------------------------------------------------------ hamming

def build_hamming(subscriber_bits: Sequence[int], threshold: int) -> Circuit:
    """1 iff the Hamming distance between x and ``subscriber_bits`` exceeds ``threshold``.

    The subscriber's bits are constants, so each difference bit is a wire or
    its negation.  Bits are sorted descending with a Bose-Nelson network whose
    comparators are (OR, AND) pairs, and ``sorted[threshold]`` is the answer.
    """
    n = len(subscriber_bits)
    if not 0 <= threshold <= n:
        raise BadThreshold(f"threshold must be in 0..{n}, got {threshold}")
    b = CircuitBuilder()
    xs = [b.input(f"x{i}") for i in range(n)]
    wires = [b.not_(x) if s else x for x, s in zip(xs, subscriber_bits)]
    for lo, hi in bose_nelson(n):
        # descending: the larger value moves to the lower index
        wires[lo], wires[hi] = b.or_(wires[lo], wires[hi]), b.and_(wires[lo], wires[hi])
    out = wires[threshold] if threshold < n else b.const(0)
    return b.build(out, inputs=[f"x{i}" for i in range(n)])


# ---------------------------------------------------------- fixed selector

def build_fixed_selector(n: int) -> Circuit:
    """OR over i of (x_i AND b_i): with b one-hot at k the output is x_k."""
    if n < 1:
        raise ValueError("selector needs n >= 1")
    b = CircuitBuilder()
    names = [f"x{i}" for i in range(n)] + [f"b{i}" for i in range(n)]
    terms = [b.and_(b.input(f"x{i}"), b.input(f"b{i}")) for i in range(n)]
    return b.build(b.reduce(OR, terms), inputs=names)


# --------------------------------------------------------------------- mux

def mux(b: CircuitBuilder, data: Sequence[int], index: Sequence[int]) -> int:
    """``data[index]`` with ``index`` big-endian.

    Each term is one balanced AND over the data bit and the index literals,
    so the depth is lg n + ceil(lg(lg n + 1)) <= lg n + lg lg n + 1.
    """
    n = len(data)
    if n == 1:
        return data[0]
    width = len(index)
    if 1 << width < n:
        raise BadShape(f"{width} index bits cannot address {n} inputs")
    terms = []
    for j, node in enumerate(data):
        literals = [
            index[p] if (j >> (width - 1 - p)) & 1 else b.not_(index[p]) for p in range(width)
        ]
        terms.append(b.reduce(AND, [node] + literals))
    return b.reduce(OR, terms)


def unary_from_bits(bits: Sequence[int]) -> Unary:
    """Arrange 25 bit-nodes (5 blocks, MSB-first one-hot) as a 5x5 matrix."""
    return [[bits[5 * i + (4 - j)] for j in range(5)] for i in range(5)]


def pick(b: CircuitBuilder, sel: int, g0: Unary, g1: Unary) -> Unary:
    nsel = b.not_(sel)
    return [
        [b.or_(b.and_(g0[i][j], nsel), b.and_(g1[i][j], sel)) for j in range(5)]
        for i in range(5)
    ]


def product_entry(b: CircuitBuilder, left: Unary, right: Unary, i: int, j: int) -> int:
    """Entry (i, j) of unary(left * right): (left*right)(i) = left(right(i))."""
    return b.reduce(OR, [b.and_(right[i][k], left[k][j]) for k in range(5)])


def unary_multiply(b: CircuitBuilder, left: Unary, right: Unary) -> Unary:
    return [[product_entry(b, left, right, i, j) for j in range(5)] for i in range(5)]


def ugp_element_width(n: int) -> int:
    return 50 + ceil_lg(n)


def build_ugp_circuit(n: int, program_len: int, strict: bool = False) -> Circuit:
    """Select + Multiply circuit simulating an encoded group program on x.

    Inputs: publisher bits x0..x(n-1), then for each program element 25
    subscriber bits of unary g0, 25 of unary g1 and ceil(lg n) index bits
    (big-endian), in element order.

    The output bit is entry (1, alpha(1)) of the unary product.  An honest
    encoding alpha-computes its predicate, so the product is either the
    identity or alpha, and that single entry separates the two.  With
    ``strict=True`` the circuit instead checks four rows of the product
    against alpha (a full equality test on permutations) at +2 depth.
    """
    if n < 1 or n & (n - 1):
        raise BadShape(f"n must be a power of two, got {n}")
    if program_len < 1:
        raise BadShape("program_len must be >= 1")
    b = CircuitBuilder()
    xs = [b.input(f"x{i}") for i in range(n)]
    selected: list[Unary] = []
    ordinal = 0
    for _ in range(program_len):
        bits = [b.input(f"b{ordinal + t}") for t in range(ugp_element_width(n))]
        ordinal += len(bits)
        g0 = unary_from_bits(bits[0:25])
        g1 = unary_from_bits(bits[25:50])
        selected.append(pick(b, mux(b, xs, bits[50:]), g0, g1))

    layer = selected
    while len(layer) > 2:
        nxt = [unary_multiply(b, layer[i], layer[i + 1]) for i in range(0, len(layer) - 1, 2)]
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt

    target = [ALPHA(i + 1) - 1 for i in range(5)]
    rows = range(4) if strict else range(1)
    if len(layer) == 1:
        entries = [layer[0][i][target[i]] for i in rows]
    else:
        entries = [product_entry(b, layer[0], layer[1], i, target[i]) for i in rows]
    out = b.reduce(AND, entries)
    names = [f"x{i}" for i in range(n)] + [f"b{i}" for i in range(ordinal)]
    return b.build(out, inputs=names)


def ugp_circuit_depth(n: int, program_len: int, strict: bool = False) -> int:
    """Closed form for depth(build_ugp_circuit(n, program_len))."""
    lg = ceil_lg(n)
    select = (lg + ceil_lg(lg + 1) if n > 1 else 0) + 2
    levels = ceil_lg(program_len)
    check = 2 if strict else 0
    return select + 4 * levels + check


def ugp_quoted_depth_bound(n: int, kappa: float) -> float:
    """Total UGP circuit depth quoted for predicates of depth kappa*lg n."""
    lg = math.log2(n)
    lglg = math.log2(lg) if lg > 1 else 0.0
    return (10 * kappa + 1) * lg + lglg + 2

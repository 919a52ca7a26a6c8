"""Barrington transforms: circuits to group programs over S5.

Two output forms are supported:

* :class:`GroupProgram` -- triples ``(g0, g1, k)``; for every input x the
  product of ``g_i^{x_{k_i}}`` equals ``target ** f(x)``.
* :class:`AOPProgram` -- the (alpha,1)-preserving form: interstitials
  ``g_1..g_{L+1}`` around index slots ``k_1..k_L``;
  ``g_1 * alpha^{x_{k_1}} * g_2 * ... * g_{L+1} == target ** f(x)``.

Both are built by the same recursion.  For a node that must be computed
against cycle ``t``:

* an input leaf is ``(1, t)`` (GP) or ``rho^-1 [alpha] rho`` with
  ``rho^-1 alpha rho == t`` (AOP);
* negation computes against ``t^-1`` and right-multiplies the last element
  by ``t``;
* AND concatenates programs for (a, alpha), (b, beta), (a, alpha^-1),
  (b, beta^-1), which computes against ``gamma = [alpha, beta]``, then
  conjugates gamma to ``t`` on the two boundary elements;
* OR is ``not(not a and not b)``.

Circuits are expanded as trees, so a depth-d circuit always yields exactly
4**d slots.  Children shallower than their sibling are lifted with
``f == f and f``.  Constants become a slot on a dummy input that is always 0
(index ``DUMMY``).
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import BinaryIO, Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .circuit import AND, CONST, INPUT, NOT, OR, PUBLISHER, SUBSCRIBER, Circuit, MissingInput, owner_of
from .s5 import (
    ALPHA,
    BETA,
    GAMMA,
    INV_TABLE,
    MUL_TABLE,
    Perm,
    conjugator_code,
    decode,
    is_five_cycle,
    power_code,
    product_codes,
)

DUMMY = -1
MEMO_LEVEL = 6
CHUNK = 1 << 20

_ALPHA, _BETA, _GAMMA = ALPHA.code, BETA.code, GAMMA.code
_AND_TARGETS = (_ALPHA, _BETA, int(INV_TABLE[_ALPHA]), int(INV_TABLE[_BETA]))


class NotACycle(ValueError):
    pass


class SinkError(RuntimeError):
    pass


@dataclass
class GroupProgram:
    g0: np.ndarray
    g1: np.ndarray
    k: np.ndarray
    inputs: tuple[str, ...]
    target: Perm

    def __len__(self) -> int:
        return len(self.k)

    @property
    def triples(self) -> Iterator[tuple[Perm, Perm, Optional[str]]]:
        for a, b, k in zip(self.g0.tolist(), self.g1.tolist(), self.k.tolist()):
            yield decode(a), decode(b), (None if k == DUMMY else self.inputs[k])


@dataclass
class AOPProgram:
    interstitials: np.ndarray
    k: np.ndarray
    inputs: tuple[str, ...]
    target: Perm

    def __len__(self) -> int:
        return len(self.k)

    @property
    def index_seq(self) -> list[Optional[str]]:
        return [None if k == DUMMY else self.inputs[k] for k in self.k.tolist()]


# ------------------------------------------------------------ the recursion

def _mul(a: int, b: int) -> int:
    return int(MUL_TABLE[a, b])


def _inv(a: int) -> int:
    return int(INV_TABLE[a])


class _Walker:
    """Shared lemma-chain recursion; subclasses supply leaves and joins."""

    def __init__(self, circuit: Circuit):
        self.c = circuit
        self.memo: dict[tuple, tuple] = {}

    def resolve(self, node: int, neg: bool, t: int, level: int):
        """Reduce (node, negated?, target) to a leaf or a 4-way AND form.

        Returns ``("leaf", node, t, extra)`` or
        ``("and", (a, neg_a), (b, neg_b), t, extra)`` where ``extra`` must
        right-multiply the last element of the result.
        """
        extra = 0
        gates = self.c.gates
        while True:
            if level > self.c.gate_depth(node):
                return "and", (node, neg), (node, neg), t, extra
            gate = gates[node]
            if gate.op == NOT:
                node, neg = gate.args[0], not neg
                continue
            if gate.op == CONST:
                return "leaf", (CONST, gate.value ^ int(neg)), t, extra
            if gate.op == OR and not neg:
                a, b = gate.args
                return "and", (a, True), (b, True), _inv(t), _mul(t, extra)
            if gate.op == OR:
                a, b = gate.args
                return "and", (a, True), (b, True), t, extra
            if neg:
                # compute against t^-1, then fix up the last element by t
                t, extra, neg = _inv(t), _mul(t, extra), False
            if gate.op == INPUT:
                return "leaf", (INPUT, self.c.input_position(gate.name)), t, extra
            a, b = gate.args
            return "and", (a, False), (b, False), t, extra

    def build(self, node: int, neg: bool, t: int, level: int) -> tuple:
        key = (node, neg, t, level)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        form = self.resolve(node, neg, t, level)
        if form[0] == "leaf":
            _, leaf, tt, extra = form
            result = self.leaf(leaf, tt)
            result = self.bound(result, 0, extra)
        else:
            _, ca, cb, tt, extra = form
            rho = conjugator_code(tt, _GAMMA)
            parts = [
                self.build(ca[0], ca[1], _AND_TARGETS[0], level - 1),
                self.build(cb[0], cb[1], _AND_TARGETS[1], level - 1),
                self.build(ca[0], ca[1], _AND_TARGETS[2], level - 1),
                self.build(cb[0], cb[1], _AND_TARGETS[3], level - 1),
            ]
            result = self.bound(self.join(parts), _inv(rho), _mul(rho, extra))
        if level <= MEMO_LEVEL:
            for arr in result:
                arr.setflags(write=False)
            self.memo[key] = result
        return result

    def emit(self, node: int, neg: bool, t: int, level: int, lm: int, rm: int, out) -> None:
        """Stream the program, first element left-multiplied by lm, last right by rm."""
        if level <= MEMO_LEVEL:
            out.append(self.bound(self.build(node, neg, t, level), lm, rm))
            return
        _, ca, cb, tt, extra = self.resolve(node, neg, t, level)
        rho = conjugator_code(tt, _GAMMA)
        kids = (ca, cb, ca, cb)
        for i, (child, target) in enumerate(zip(kids, _AND_TARGETS)):
            left = _mul(lm, _inv(rho)) if i == 0 else 0
            right = _mul(_mul(rho, extra), rm) if i == 3 else 0
            self.emit(child[0], child[1], target, level - 1, left, right, out)

    # hooks
    def leaf(self, leaf, t: int) -> tuple:
        raise NotImplementedError

    def join(self, parts: list) -> tuple:
        raise NotImplementedError

    def bound(self, arrays: tuple, lm: int, rm: int) -> tuple:
        raise NotImplementedError


class _GPWalker(_Walker):
    def leaf(self, leaf, t):
        kind, value = leaf
        if kind == INPUT:
            return np.array([0], np.uint8), np.array([t], np.uint8), np.array([value], np.int32)
        g = power_code(t, value)
        return np.array([g], np.uint8), np.array([g], np.uint8), np.array([DUMMY], np.int32)

    def join(self, parts):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))

    def bound(self, arrays, lm, rm):
        if lm == 0 and rm == 0:
            return arrays
        g0, g1, k = arrays[0].copy(), arrays[1].copy(), arrays[2]
        for g in (g0, g1):
            g[0] = MUL_TABLE[lm, g[0]]
            g[-1] = MUL_TABLE[g[-1], rm]
        return g0, g1, k


class _AOPWalker(_Walker):
    def leaf(self, leaf, t):
        kind, value = leaf
        if kind == INPUT:
            rho = conjugator_code(t, _ALPHA)
            return np.array([_inv(rho), rho], np.uint8), np.array([value], np.int32)
        return np.array([power_code(t, value), 0], np.uint8), np.array([DUMMY], np.int32)

    def join(self, parts):
        inter = [parts[0][0][:-1]]
        for prev, nxt in zip(parts, parts[1:]):
            inter.append(np.array([MUL_TABLE[prev[0][-1], nxt[0][0]]], np.uint8))
            inter.append(nxt[0][1:-1])
        inter.append(parts[-1][0][-1:])
        return np.concatenate(inter), np.concatenate([p[1] for p in parts])

    def bound(self, arrays, lm, rm):
        if lm == 0 and rm == 0:
            return arrays
        inter = arrays[0].copy()
        inter[0] = MUL_TABLE[lm, inter[0]]
        inter[-1] = MUL_TABLE[inter[-1], rm]
        return inter, arrays[1]


def _check_target(target: Perm) -> int:
    if not is_five_cycle(target):
        raise NotACycle(f"target {target} is not a 5-cycle")
    return target.code


def _level(c: Circuit, level: Optional[int]) -> int:
    if level is None:
        return c.depth
    if level < c.depth:
        raise ValueError(f"level {level} is below circuit depth {c.depth}")
    return level


def transform(c: Circuit, target: Perm = ALPHA, level: Optional[int] = None) -> GroupProgram:
    """Group program of length exactly ``4 ** depth`` that target-computes ``c``.

    ``level`` (>= depth) lifts the whole circuit to a longer program.
    """
    pieces: list[tuple] = []
    stream_transform(c, target, lambda chunk: pieces.append(chunk), level=level)
    g0, g1, k = (np.concatenate([p[i] for p in pieces]) for i in range(3))
    return GroupProgram(g0, g1, k, c.inputs, target)


class _Buffer:
    def __init__(self, sink: Callable, chunk: int):
        self.sink, self.chunk = sink, chunk
        self.parts: list[tuple] = []
        self.size = 0
        self.length = 0

    def append(self, arrays: tuple) -> None:
        self.parts.append(arrays)
        self.size += len(arrays[2])
        if self.size >= self.chunk:
            self.flush()

    def flush(self) -> None:
        if not self.parts:
            return
        merged = tuple(np.concatenate([p[i] for p in self.parts]) for i in range(3))
        self.parts, self.size = [], 0
        self.length += len(merged[2])
        try:
            self.sink(merged)
        except Exception as exc:
            raise SinkError(str(exc)) from exc


def stream_transform(
    c: Circuit,
    target: Perm,
    sink: Callable[[tuple[np.ndarray, np.ndarray, np.ndarray]], None],
    level: Optional[int] = None,
    chunk: int = CHUNK,
) -> dict:
    """Emit the group program of ``transform`` as ``(g0, g1, k)`` array chunks.

    Only about ``chunk`` elements are held at a time.  Returns stats with the
    total length and slot counts per owner.
    """
    t = _check_target(target)
    lvl = _level(c, level)
    walker = _GPWalker(c)
    owners = np.array([owner_of(name) == PUBLISHER for name in c.inputs] + [False])
    counts = {PUBLISHER: 0, SUBSCRIBER: 0, "dummy": 0}

    def counting_sink(arrays):
        k = arrays[2]
        dummy = int(np.count_nonzero(k == DUMMY))
        pub = int(np.count_nonzero(owners[k])) if len(c.inputs) else 0
        counts["dummy"] += dummy
        counts[PUBLISHER] += pub
        counts[SUBSCRIBER] += len(k) - pub - dummy
        sink(arrays)

    buf = _Buffer(counting_sink, chunk)
    walker.emit(c.output, False, t, lvl, 0, 0, buf)
    buf.flush()
    return {"length": buf.length, "depth": lvl, **counts}


def transform_alpha_one(c: Circuit, target: Perm = ALPHA, level: Optional[int] = None) -> AOPProgram:
    """(alpha,1)-preserving program with ``4 ** depth`` index slots."""
    t = _check_target(target)
    lvl = _level(c, level)
    walker = _AOPWalker(c)
    inter, k = walker.build(c.output, False, t, lvl)
    return AOPProgram(np.array(inter), np.array(k), c.inputs, target)


# --------------------------------------------------------------- evaluation

def _input_matrix(inputs: Sequence[str], k: np.ndarray, a) -> np.ndarray:
    """Rows of input bits with an extra all-zero column for DUMMY."""
    if isinstance(a, Mapping):
        used = set(np.unique(k[k != DUMMY]).tolist())
        row = []
        for i, name in enumerate(inputs):
            if name in a:
                row.append(int(bool(a[name])))
            elif i in used:
                raise MissingInput(f"assignment lacks input {name!r}")
            else:
                row.append(0)
        xs = np.array([row], dtype=np.uint8)
    else:
        xs = np.atleast_2d(np.asarray(a, dtype=np.uint8))
        if xs.shape[1] < len(inputs):
            raise MissingInput(f"need values for {len(inputs)} inputs")
        xs = xs[:, : len(inputs)]
    return np.concatenate([xs, np.zeros((xs.shape[0], 1), np.uint8)], axis=1)


def eval_gp_batch(p: GroupProgram, xs) -> np.ndarray:
    x = _input_matrix(p.inputs, p.k, xs)
    bits = x[:, p.k]
    return product_codes(np.where(bits == 1, p.g1, p.g0))


def eval_gp(p: GroupProgram, a) -> Perm:
    return decode(int(eval_gp_batch(p, a)[0]))


def aop_sequence(p: AOPProgram, bits: np.ndarray) -> np.ndarray:
    """Interleave interstitials with alpha^bit slots: (..., 2L+1) codes."""
    bits = np.atleast_2d(bits)
    seq = np.empty((bits.shape[0], 2 * len(p) + 1), np.uint8)
    seq[:, 0::2] = p.interstitials
    seq[:, 1::2] = np.where(bits == 1, _ALPHA, 0)
    return seq


def eval_aop_batch(p: AOPProgram, xs) -> np.ndarray:
    x = _input_matrix(p.inputs, p.k, xs)
    return product_codes(aop_sequence(p, x[:, p.k]))


def eval_aop(p: AOPProgram, a) -> Perm:
    return decode(int(eval_aop_batch(p, a)[0]))


def eval_gp_stream(c: Circuit, target: Perm, a, level: Optional[int] = None) -> Perm:
    """Evaluate the transform of ``c`` without materializing it."""
    x = _input_matrix(c.inputs, np.array([], np.int32), a)[0]
    acc = [0]

    def sink(chunk):
        g0, g1, k = chunk
        acc[0] = int(MUL_TABLE[acc[0], product_codes(np.where(x[k] == 1, g1, g0))])

    stream_transform(c, target, sink, level=level)
    return decode(acc[0])


def program_digest(p: Union[GroupProgram, AOPProgram]) -> str:
    h = hashlib.sha256()
    if isinstance(p, GroupProgram):
        for arr in (p.g0, p.g1, p.k):
            h.update(np.ascontiguousarray(arr).tobytes())
    else:
        for arr in (p.interstitials, p.k):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# --------------------------------------------------------------- file form

MAGIC = b"GPS5"
VERSION = 1
VARIANT_GP, VARIANT_AOP = 0, 1
_HEADER = struct.Struct(">4sBBQ")
_NO_INPUT = 0xFFFFFFFF


class ProgramFormatError(ValueError):
    pass


def _ordinals(k: np.ndarray) -> np.ndarray:
    return np.where(k == DUMMY, _NO_INPUT, k).astype(">u4")


def write_program(p: Union[GroupProgram, AOPProgram], fh: BinaryIO) -> int:
    if isinstance(p, GroupProgram):
        fh.write(_HEADER.pack(MAGIC, VERSION, VARIANT_GP, len(p)))
        rec = np.empty(len(p), dtype=[("g0", "u1"), ("g1", "u1"), ("k", ">u4")])
        rec["g0"], rec["g1"], rec["k"] = p.g0, p.g1, _ordinals(p.k)
        fh.write(rec.tobytes())
        return _HEADER.size + rec.nbytes
    fh.write(_HEADER.pack(MAGIC, VERSION, VARIANT_AOP, len(p)))
    fh.write(p.interstitials.astype(np.uint8).tobytes())
    fh.write(_ordinals(p.k).tobytes())
    return _HEADER.size + len(p) * 5 + 1


def read_program(
    fh: BinaryIO, inputs: Sequence[str] = (), target: Perm = ALPHA
) -> Union[GroupProgram, AOPProgram]:
    header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ProgramFormatError("truncated header")
    magic, version, variant, length = _HEADER.unpack(header)
    if magic != MAGIC or version != VERSION:
        raise ProgramFormatError("not a GPS5 version 1 file")

    def ordinals_to_k(raw: np.ndarray) -> np.ndarray:
        k = raw.astype(np.int64)
        k[raw == _NO_INPUT] = DUMMY
        return k.astype(np.int32)

    if variant == VARIANT_GP:
        dt = np.dtype([("g0", "u1"), ("g1", "u1"), ("k", ">u4")])
        body = fh.read(dt.itemsize * length)
        if len(body) != dt.itemsize * length:
            raise ProgramFormatError("truncated body")
        rec = np.frombuffer(body, dtype=dt)
        k = ordinals_to_k(rec["k"])
        names = tuple(inputs) or _placeholder_names(k)
        return GroupProgram(rec["g0"].copy(), rec["g1"].copy(), k, names, target)
    if variant == VARIANT_AOP:
        inter = np.frombuffer(fh.read(length + 1), np.uint8).copy()
        raw = np.frombuffer(fh.read(4 * length), ">u4")
        if len(inter) != length + 1 or len(raw) != length:
            raise ProgramFormatError("truncated body")
        k = ordinals_to_k(raw)
        names = tuple(inputs) or _placeholder_names(k)
        return AOPProgram(inter, k, names, target)
    raise ProgramFormatError(f"unknown variant {variant}")


def _placeholder_names(k: np.ndarray) -> tuple[str, ...]:
    top = int(k.max()) + 1 if len(k) and k.max() >= 0 else 0
    return tuple(f"i{j}" for j in range(top))

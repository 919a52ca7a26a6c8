"""The three matching protocols: UGP, FSGP and OFSGP.

Every session runs over a public :class:`SessionStructure`: a sequence of
``total_slots`` positions, each owned by the publisher or the subscriber.
Both parties instantiate their own positions, blind them with the shared
tape, and the broker multiplies the reassembled sequence.  The product is
alpha when the predicate matches the metadata, and the identity otherwise.

FSGP/OFSGP layout
    The predicate is turned into an (alpha,1)-preserving program with
    ``4**D`` slots.  Each slot is replaced by a selector block, a fixed
    sub-program whose value is ``alpha^{x_k}`` for a subscriber-chosen k.
    Publisher elements are ``alpha^{m_i}``.  Subscriber interstitials between
    them are merged, so positions alternate sub, pub, sub, ..., sub.

UGP layout
    The broker transforms a universal circuit (select + multiply) that
    evaluates a unary-encoded group program on the metadata.  Each element
    of the resulting program belongs to whoever owns its input bit.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import barrington as bt
from .barrington import DUMMY, AOPProgram, GroupProgram
from .blinding import CoverageError, OverlapError, RandomTape, blind_partial, interleave
from .builders import build_fixed_selector, build_ugp_circuit, ceil_lg, ugp_element_width
from .circuit import PUBLISHER, SUBSCRIBER, Circuit, CircuitBuilder, input_index, owner_of
from .s5 import (
    ALPHA,
    IDENTITY,
    INV_TABLE,
    MUL_TABLE,
    RHO_STAR,
    Perm,
    decode,
    find_conjugator,
    product_codes,
    unary_bits,
)

UGP, FSGP, OFSGP = "ugp", "fsgp", "ofsgp"
VARIANTS = (UGP, FSGP, OFSGP)
VARIANT_CODES = {UGP: 0, FSGP: 1, OFSGP: 2}
PADDING = -1  # block selector for no-op padding slots

FLAG_MALFORMED = 1  # broker value was neither identity nor alpha

_A = ALPHA.code
_RHO = RHO_STAR.code
_RHO_INV = int(INV_TABLE[_RHO])
# sigma^-1 alpha^2 sigma == alpha
_SIGMA = find_conjugator(ALPHA, ALPHA * ALPHA).code


class ProtocolError(ValueError):
    pass


class BadParams(ProtocolError):
    pass


class BadIndex(ProtocolError):
    pass


class BadInput(ProtocolError):
    pass


class BadLength(ProtocolError):
    pass


class DepthExceeded(ProtocolError):
    pass


class IndexOutOfRange(ProtocolError):
    pass


class IncompleteShares(CoverageError):
    pass


class PositionOverlap(OverlapError):
    pass


# ------------------------------------------------------------ selector blocks

@dataclass(frozen=True)
class SelectorBlock:
    """Fixed publisher index sequence plus the subscriber's interstitial rule."""

    kind: str
    n: int
    bits: np.ndarray  # publisher bit per slot
    # FS only: the underlying program and which of its slots are b-slots
    program: Optional[AOPProgram] = field(default=None, compare=False)

    @property
    def slots(self) -> int:
        return len(self.bits)


def build_ofs_selector_block(n: int) -> SelectorBlock:
    """Index sequence (1,1,2,2,...,n,n): ``2n`` publisher slots."""
    if n < 1:
        raise BadParams("n must be >= 1")
    return SelectorBlock(OFSGP, n, np.repeat(np.arange(n, dtype=np.int32), 2))


def _check_k(block: SelectorBlock, k: int) -> None:
    if k != PADDING and not 0 <= k < block.n:
        raise BadIndex(f"bit index {k} outside 0..{block.n - 1}")


def instantiate_ofs(block: SelectorBlock, k: int) -> np.ndarray:
    """The ``2n + 1`` interstitials making the block evaluate to alpha^{x_k}.

    Between the two copies of bit i != k sits rho* (alpha^x rho* alpha^x ==
    rho* for both x), cancelled by rho*^-1 after the pair.  Bit k gets the
    identity, leaving alpha^{2 x_k}, which sigma conjugates back to
    alpha^{x_k}.  With ``k == PADDING`` every pair cancels and the block is
    the identity.
    """
    _check_k(block, k)
    n = block.n
    inter = np.empty(2 * n + 1, dtype=np.uint8)
    inter[0] = int(INV_TABLE[_SIGMA]) if k != PADDING else 0
    for i in range(n):
        mine = i == k
        inter[2 * i + 1] = 0 if mine else _RHO
        inter[2 * i + 2] = 0 if mine else _RHO_INV
    if k != PADDING:
        inter[-1] = MUL_TABLE[inter[-1], _SIGMA]
    return inter


@lru_cache(maxsize=None)
def build_fs_selector_block(n: int) -> SelectorBlock:
    """(alpha,1)-preserving transform of the fixed selector circuit."""
    if n < 1:
        raise BadParams("n must be >= 1")
    prog = bt.transform_alpha_one(build_fixed_selector(n), ALPHA)
    names = prog.inputs
    kinds = np.array([names[k][0] == "x" for k in prog.k.tolist()])
    bits = np.array([input_index(names[k]) for k in prog.k[kinds].tolist()], dtype=np.int32)
    return SelectorBlock(FSGP, n, bits, prog)


def instantiate_fs(block: SelectorBlock, k: int) -> np.ndarray:
    """Fold the subscriber's one-hot b (all zero for padding) into interstitials."""
    _check_k(block, k)
    prog = block.program
    names = prog.inputs
    out = [int(prog.interstitials[0])]
    for slot, ordinal in enumerate(prog.k.tolist()):
        name = names[ordinal]
        nxt = int(prog.interstitials[slot + 1])
        if name[0] == "x":
            out.append(nxt)
        else:
            b = int(input_index(name) == k)
            out[-1] = int(MUL_TABLE[MUL_TABLE[out[-1], _A if b else 0], nxt])
    return np.array(out, dtype=np.uint8)


def block_value(block: SelectorBlock, inter: np.ndarray, x: Sequence[int]) -> Perm:
    """Evaluate an instantiated block on publisher bits ``x``."""
    xs = np.asarray(x, dtype=np.uint8)
    seq = np.empty(2 * block.slots + 1, dtype=np.uint8)
    seq[0::2] = inter
    seq[1::2] = np.where(xs[block.bits] == 1, _A, 0)
    return decode(int(product_codes(seq)))


def _block(variant: str, n: int) -> SelectorBlock:
    return build_ofs_selector_block(n) if variant == OFSGP else build_fs_selector_block(n)


def _instantiate(block: SelectorBlock, k: int) -> np.ndarray:
    return instantiate_ofs(block, k) if block.kind == OFSGP else instantiate_fs(block, k)


# ---------------------------------------------------------------- structure

@dataclass(frozen=True, eq=False)
class SessionStructure:
    variant: str
    n: int
    depth_bound: int
    owner: np.ndarray  # 1 where the publisher owns the position
    bit: np.ndarray  # referenced input ordinal of the owner, -1 if none
    length: int  # slots before canonical merging (L)
    program: Optional[GroupProgram] = None  # UGP only: the public transformed circuit

    @property
    def total_slots(self) -> int:
        return len(self.owner)

    @property
    def publisher_positions(self) -> np.ndarray:
        return np.flatnonzero(self.owner)

    @property
    def subscriber_positions(self) -> np.ndarray:
        return np.flatnonzero(self.owner == 0)

    @property
    def publisher_slots(self) -> int:
        return int(np.count_nonzero(self.owner))

    @property
    def index_seq(self) -> list[tuple[str, int]]:
        return [
            (PUBLISHER if o else SUBSCRIBER, int(b))
            for o, b in zip(self.owner.tolist(), self.bit.tolist())
        ]

    @property
    def digest(self) -> bytes:
        return _digest(self)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SessionStructure) and self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)


def _digest(s: SessionStructure) -> bytes:
    cached = s.__dict__.get("_digest")
    if cached is None:
        h = hashlib.sha256()
        h.update(repr((s.variant, s.n, s.depth_bound, s.length)).encode())
        for arr in (s.owner, s.bit):
            h.update(np.ascontiguousarray(arr).tobytes())
        if s.program is not None:
            h.update(bt.program_digest(s.program).encode())
        cached = h.digest()
        object.__setattr__(s, "_digest", cached)
    return cached


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _check_params(variant: str, n: int, depth_bound: int) -> None:
    if variant not in VARIANTS:
        raise BadParams(f"unknown variant {variant!r}")
    if n < 1 or depth_bound < 0:
        raise BadParams("need n >= 1 and depth_bound >= 0")
    if variant in (UGP, FSGP) and n & (n - 1):
        raise BadParams(f"{variant} needs n a power of two, got {n}")


@lru_cache(maxsize=16)
def negotiate_structure(variant: str, n: int, depth_bound: int) -> SessionStructure:
    """The public, predicate-independent layout for (variant, n, D)."""
    _check_params(variant, n, depth_bound)
    if variant == UGP:
        return _ugp_structure(n, depth_bound)
    block = _block(variant, n)
    slots = 4**depth_bound
    pub_bits = np.tile(block.bits, slots)
    total = 2 * len(pub_bits) + 1
    owner = np.zeros(total, dtype=np.uint8)
    owner[1::2] = 1
    bit = np.full(total, -1, dtype=np.int32)
    bit[1::2] = pub_bits
    # FSGP counts the folded b-slots too: 4n^2 per block for n a power of two
    per_block = len(block.program) if variant == FSGP else block.slots
    return SessionStructure(variant, n, depth_bound, _frozen(owner), _frozen(bit), per_block * slots)


def _ugp_structure(n: int, depth_bound: int) -> SessionStructure:
    circuit = build_ugp_circuit(n, 4**depth_bound)
    prog = bt.transform(circuit, ALPHA)
    k = prog.k
    owner = ((k >= 0) & (k < n)).astype(np.uint8)
    bit = np.where(owner == 1, k, np.where(k >= n, k - n, -1)).astype(np.int32)
    for arr in (prog.g0, prog.g1, prog.k):
        arr.setflags(write=False)
    return SessionStructure(UGP, n, depth_bound, _frozen(owner), _frozen(bit), len(prog), prog)


# ------------------------------------------------------------------- shares

@dataclass
class Share:
    session_id: bytes
    role: str
    positions: np.ndarray
    elems: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class MatchResult:
    matched: int
    broker_value: Perm
    flags: int = 0


def new_session_id() -> bytes:
    return os.urandom(16)


def _bit_ordinal(name: str, n: int) -> int:
    if owner_of(name) != PUBLISHER:
        raise BadInput(f"predicate may only read publisher bits, found {name!r}")
    i = input_index(name)
    if not 0 <= i < n:
        raise BadInput(f"{name!r} is outside x0..x{n - 1}")
    return i


def predicate_slots(structure: SessionStructure, predicate: Circuit) -> tuple[np.ndarray, np.ndarray]:
    """Predicate AOP padded to ``4**D`` slots: (interstitials, bit per slot or PADDING)."""
    if predicate.depth > structure.depth_bound:
        raise DepthExceeded(f"predicate depth {predicate.depth} > bound {structure.depth_bound}")
    prog = bt.transform_alpha_one(predicate, ALPHA)
    ordinals = np.array([_bit_ordinal(name, structure.n) for name in prog.inputs] + [PADDING])
    bits = ordinals[prog.k].astype(np.int32)  # DUMMY (-1) maps to PADDING
    pad = 4**structure.depth_bound - len(bits)
    inter = np.concatenate([prog.interstitials, np.zeros(pad, np.uint8)])
    bits = np.concatenate([bits, np.full(pad, PADDING, np.int32)])
    return inter, bits


def subscriber_sequence(structure: SessionStructure, predicate: Circuit) -> np.ndarray:
    """Unblinded session sequence with subscriber elements filled (publisher slots zero)."""
    if structure.variant == UGP:
        bits = ugp_subscriber_bits(structure, predicate)
        prog = structure.program
        seq = np.zeros(structure.total_slots, np.uint8)
        sub = structure.owner == 0
        kbits = np.append(bits, 0)[structure.bit[sub]]
        seq[sub] = np.where(kbits == 1, prog.g1[sub], prog.g0[sub])
        return seq
    block = _block(structure.variant, structure.n)
    inter, slot_bits = predicate_slots(structure, predicate)
    choices = np.arange(-1, structure.n)
    table = np.stack([_instantiate(block, int(k)) for k in choices])  # row k+1
    rows = table[slot_bits + 1]  # (S, 2P_b + 1)
    # fold predicate interstitials onto each block's boundaries
    rows[:, 0] = MUL_TABLE[inter[:-1], rows[:, 0]]
    subs = np.empty(structure.publisher_slots + 1, np.uint8)
    pb = block.slots
    body = rows[:, :-1].reshape(-1)
    subs[:-1] = body
    # block s's trailing interstitial merges with block s+1's leading one
    starts = np.arange(1, len(slot_bits)) * pb
    subs[starts] = MUL_TABLE[rows[:-1, -1], subs[starts]]
    subs[-1] = MUL_TABLE[rows[-1, -1], inter[-1]]
    seq = np.zeros(structure.total_slots, np.uint8)
    seq[0::2] = subs
    return seq


def publisher_sequence(structure: SessionStructure, metadata: Sequence[int]) -> np.ndarray:
    m = np.asarray(metadata, dtype=np.uint8)
    if m.shape != (structure.n,) or (m > 1).any():
        raise BadLength(f"metadata must be {structure.n} bits")
    seq = np.zeros(structure.total_slots, np.uint8)
    pub = structure.owner == 1
    xb = m[structure.bit[pub]]
    if structure.variant == UGP:
        prog = structure.program
        seq[pub] = np.where(xb == 1, prog.g1[pub], prog.g0[pub])
    else:
        seq[pub] = np.where(xb == 1, _A, 0)
    return seq


def subscriber_share(
    structure: SessionStructure, predicate: Circuit, tape: RandomTape, session_id: bytes = bytes(16)
) -> Share:
    seq = subscriber_sequence(structure, predicate)
    part = blind_partial(seq, structure.subscriber_positions, tape)
    return Share(session_id, SUBSCRIBER, part.positions, part.elems)


def publisher_share(
    structure: SessionStructure, metadata: Sequence[int], tape: RandomTape, session_id: bytes = bytes(16)
) -> Share:
    seq = publisher_sequence(structure, metadata)
    part = blind_partial(seq, structure.publisher_positions, tape)
    return Share(session_id, PUBLISHER, part.positions, part.elems)


def broker_match(structure: SessionStructure, pub: Share, sub: Share) -> MatchResult:
    """Reassemble and multiply; matched iff the product is alpha."""
    if pub.session_id != sub.session_id:
        raise IncompleteShares("shares belong to different sessions")
    try:
        seq = interleave([pub, sub], structure.total_slots)
    except OverlapError as exc:
        raise PositionOverlap(str(exc)) from exc
    except CoverageError as exc:
        raise IncompleteShares(str(exc)) from exc
    return result_from_value(int(product_codes(seq)))


def result_from_value(code: int) -> MatchResult:
    value = decode(code)
    flags = 0 if code in (0, _A) else FLAG_MALFORMED
    return MatchResult(int(code == _A), value, flags)


# ---------------------------------------------------------------------- UGP

def ugp_predicate_program(predicate: Circuit, n: int, depth_bound: int) -> GroupProgram:
    """Predicate group program padded with dummy pairs to ``4**D``; inputs x0..x(n-1)."""
    if predicate.depth > depth_bound:
        raise DepthExceeded(f"predicate depth {predicate.depth} > bound {depth_bound}")
    gp = bt.transform(predicate, ALPHA)
    ordinals = np.array([_bit_ordinal(name, n) for name in gp.inputs] + [DUMMY])
    k = ordinals[gp.k].astype(np.int32)
    pad = 4**depth_bound - len(k)
    zeros = np.zeros(pad, np.uint8)
    return GroupProgram(
        np.concatenate([gp.g0, zeros]),
        np.concatenate([gp.g1, zeros]),
        np.concatenate([k, np.full(pad, DUMMY, np.int32)]),
        tuple(f"x{i}" for i in range(n)),
        ALPHA,
    )


def ugp_encode_predicate(gp: GroupProgram, n: int) -> np.ndarray:
    """Per element: unary g0 (25 bits), unary g1 (25 bits), big-endian index."""
    width = ceil_lg(n)
    rows = []
    for g0, g1, k in zip(gp.g0.tolist(), gp.g1.tolist(), gp.k.tolist()):
        if k == DUMMY:
            if g0 != g1:
                raise IndexOutOfRange("constant element must have g0 == g1")
            k = 0
        if not 0 <= k < n:
            raise IndexOutOfRange(f"index {k} outside 0..{n - 1}")
        index = [(k >> (width - 1 - p)) & 1 for p in range(width)]
        rows.append(unary_bits(decode(g0)) + unary_bits(decode(g1)) + index)
    return np.array(rows, dtype=np.uint8).reshape(-1)


def ugp_decode_predicate(bits: Sequence[int], n: int) -> GroupProgram:
    from .s5 import from_unary_bits

    width = ugp_element_width(n)
    arr = np.asarray(bits, dtype=np.uint8)
    if len(arr) % width:
        raise BadLength(f"bit count {len(arr)} is not a multiple of {width}")
    g0, g1, ks = [], [], []
    for row in arr.reshape(-1, width).tolist():
        g0.append(from_unary_bits(row[:25]).code)
        g1.append(from_unary_bits(row[25:50]).code)
        ks.append(int("".join(map(str, row[50:])) or "0", 2))
    return GroupProgram(
        np.array(g0, np.uint8), np.array(g1, np.uint8), np.array(ks, np.int32),
        tuple(f"x{i}" for i in range(n)), ALPHA,
    )


def ugp_subscriber_bits(structure: SessionStructure, predicate: Circuit) -> np.ndarray:
    gp = ugp_predicate_program(predicate, structure.n, structure.depth_bound)
    return ugp_encode_predicate(gp, structure.n)


def ugp_match_session(
    n: int, predicate: Circuit, metadata: Sequence[int], tape_bytes_or_seed: bytes, depth_bound: Optional[int] = None
) -> MatchResult:
    return run_session(UGP, n, predicate, metadata, tape_bytes_or_seed, depth_bound)


# --------------------------------------------------------------- in-process

def run_session(
    variant: str,
    n: int,
    predicate: Circuit,
    metadata: Sequence[int],
    seed: bytes,
    depth_bound: Optional[int] = None,
) -> MatchResult:
    """One full three-party run in-process; both parties share ``seed``."""
    d = predicate.depth if depth_bound is None else depth_bound
    structure = negotiate_structure(variant, n, d)
    sid = new_session_id()
    sub = subscriber_share(structure, predicate, RandomTape.from_seed(seed), sid)
    pub = publisher_share(structure, metadata, RandomTape.from_seed(seed), sid)
    return broker_match(structure, pub, sub)


def constant_predicate(value: int) -> Circuit:
    b = CircuitBuilder()
    return b.build(b.const(value), inputs=[])

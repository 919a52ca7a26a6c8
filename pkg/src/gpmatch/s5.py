"""Exact arithmetic in the symmetric group S5.

Elements are written in one-line notation: ``(2 3 4 5 1)`` sends 1->2,
2->3, ..., 5->1.  Composition is right-to-left::

    (g * h)(x) == g(h(x))

This is the only convention under which alpha*beta*alpha^-1*beta^-1 comes out
as ``(3 5 2 1 4)``, and the whole package depends on it.

Every element also has a canonical integer code in ``0..119``: its rank in
the lexicographic enumeration of one-line notations.  Hot paths (program
evaluation, blinding) work on ``numpy.uint8`` code arrays and the dense
tables :data:`MUL_TABLE` / :data:`INV_TABLE`; :class:`Perm` is the boundary
type.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

ORDER = 120


class NotConjugate(ValueError):
    pass


class OutOfRange(ValueError):
    pass


_ONE_LINE = tuple(itertools.permutations(range(1, 6)))
_CODE = {images: i for i, images in enumerate(_ONE_LINE)}


@dataclass(frozen=True)
class Perm:
    """An element of S5 in one-line notation (``images[i]`` is where i+1 goes)."""

    images: tuple[int, ...]
    code: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        images = tuple(int(v) for v in self.images)
        if images not in _CODE:
            raise ValueError(f"not a permutation of 1..5: {self.images!r}")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "code", _CODE[images])

    @classmethod
    def parse(cls, text: str) -> "Perm":
        digits = re.findall(r"\d", text)
        if len(digits) != 5 or not re.fullmatch(r"\s*\(?[\d\s,]*\)?\s*", text):
            raise ValueError(f"cannot parse permutation {text!r}")
        return cls(tuple(int(d) for d in digits))

    def __str__(self) -> str:
        return "(" + " ".join(map(str, self.images)) + ")"

    def __call__(self, point: int) -> int:
        return self.images[point - 1]

    def __mul__(self, other: "Perm") -> "Perm":
        return mul(self, other)

    def __invert__(self) -> "Perm":
        return inv(self)

    def __pow__(self, exponent: int) -> "Perm":
        return decode(power_code(self.code, exponent))

    def __int__(self) -> int:
        return self.code

    def __bytes__(self) -> bytes:
        return bytes([self.code])


PermLike = Union[Perm, int]


def _compose_images(g: Sequence[int], h: Sequence[int]) -> tuple[int, ...]:
    return tuple(g[h[i] - 1] for i in range(5))


def _inverse_images(g: Sequence[int]) -> tuple[int, ...]:
    out = [0] * 5
    for i, v in enumerate(g):
        out[v - 1] = i + 1
    return tuple(out)


ELEMENTS: tuple[Perm, ...] = tuple(Perm(p) for p in _ONE_LINE)

MUL_TABLE = np.array(
    [[_CODE[_compose_images(g, h)] for h in _ONE_LINE] for g in _ONE_LINE],
    dtype=np.uint8,
)
INV_TABLE = np.array([_CODE[_inverse_images(g)] for g in _ONE_LINE], dtype=np.uint8)
MUL_TABLE.setflags(write=False)
INV_TABLE.setflags(write=False)


def encode(g: Perm) -> int:
    return g.code


def decode(i: int) -> Perm:
    if not 0 <= int(i) < ORDER:
        raise OutOfRange(f"element code must be in 0..119, got {i}")
    return ELEMENTS[int(i)]


def _code(g: PermLike) -> int:
    return g.code if isinstance(g, Perm) else int(g)


def mul(g: Perm, h: Perm) -> Perm:
    return ELEMENTS[MUL_TABLE[g.code, h.code]]


def inv(g: Perm) -> Perm:
    return ELEMENTS[INV_TABLE[g.code]]


def power_code(code: int, exponent: int) -> int:
    base = int(code) if exponent >= 0 else int(INV_TABLE[code])
    acc = 0
    for _ in range(abs(exponent) % 60):  # exponent of S5 is 60
        acc = int(MUL_TABLE[acc, base])
    return acc


def is_five_cycle(g: Perm) -> bool:
    point, steps = 1, 0
    while True:
        point = g(point)
        steps += 1
        if point == 1:
            return steps == 5


@lru_cache(maxsize=None)
def _conjugator_code(target: int, source: int) -> int:
    inv_t = INV_TABLE
    for rho in range(ORDER):
        if MUL_TABLE[MUL_TABLE[inv_t[rho], source], rho] == target:
            return rho
    raise NotConjugate(f"{decode(source)} is not conjugate to {decode(target)}")


def find_conjugator(target: Perm, source: Perm) -> Perm:
    """Lexicographically smallest rho with ``rho^-1 * source * rho == target``."""
    return ELEMENTS[_conjugator_code(target.code, source.code)]


def conjugator_code(target: int, source: int) -> int:
    return _conjugator_code(int(target), int(source))


def as_codes(seq: Union[np.ndarray, Iterable[PermLike]]) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        return seq.astype(np.uint8, copy=False)
    return np.fromiter((_code(g) for g in seq), dtype=np.uint8)


def product_codes(codes: np.ndarray, axis: int = -1) -> np.ndarray:
    """Ordered product along ``axis`` by pairwise tree reduction.

    Associativity lets adjacent pairs be combined in parallel as long as the
    left-to-right order of the segments is kept.  An empty axis gives the
    identity (code 0).
    """
    a = np.moveaxis(np.asarray(codes, dtype=np.uint8), axis, -1)
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-1], dtype=np.uint8)
    while a.shape[-1] > 1:
        n = a.shape[-1]
        paired = MUL_TABLE[a[..., 0 : n - 1 : 2], a[..., 1:n:2]]
        if n % 2:
            paired = np.concatenate([paired, a[..., -1:]], axis=-1)
        a = paired
    return a[..., 0]


def seq_value(seq: Union[np.ndarray, Iterable[PermLike]]) -> Perm:
    """Value of a sequence: the product of its elements in order."""
    return ELEMENTS[int(product_codes(as_codes(seq)))]


def prefix_products(codes: np.ndarray) -> np.ndarray:
    """Running products ``g1, g1*g2, g1*g2*g3, ...`` (sequential scan)."""
    out = np.empty(len(codes), dtype=np.uint8)
    acc = 0
    for i, c in enumerate(codes.tolist()):
        acc = MUL_TABLE[acc, c]
        out[i] = acc
    return out


IDENTITY = Perm((1, 2, 3, 4, 5))
ALPHA = Perm((2, 3, 4, 5, 1))
BETA = Perm((3, 5, 4, 2, 1))
ALPHA_INV = inv(ALPHA)
BETA_INV = inv(BETA)
GAMMA = ALPHA * BETA * ALPHA_INV * BETA_INV
# rho* conjugates alpha to its inverse, so alpha^x * rho* * alpha^x == rho*.
RHO_STAR = find_conjugator(ALPHA_INV, ALPHA)


def unary_bits(g: Perm) -> list[int]:
    """25-bit unary form: per point i, five bits with a 1 at position 5 - g(i).

    ``(2 3 4 5 1)`` becomes ``00010 00100 01000 10000 00001``.
    """
    bits: list[int] = []
    for image in g.images:
        bits.extend(1 if 5 - j == image else 0 for j in range(5))
    return bits


def from_unary_bits(bits: Sequence[int]) -> Perm:
    if len(bits) != 25:
        raise ValueError("unary permutation needs 25 bits")
    images = []
    for i in range(5):
        block = list(bits[5 * i : 5 * i + 5])
        if sum(block) != 1:
            raise ValueError(f"block {i} is not one-hot: {block}")
        images.append(5 - block.index(1))
    return Perm(tuple(images))

"""Shared random tapes, uniform S5 sampling and sequence blinding.

A sequence ``g_1..g_L`` is blinded with ``L-1`` uniform blinders as::

    g_1 r_1,  r_1^-1 g_2 r_2,  ...,  r_{L-1}^-1 g_L

which keeps the product and makes every element but the last uniform and
independent.  Both parties of a session read blinders from the same tape in
the same order, so each can blind its own positions and the broker can
reassemble the full blinded sequence.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .s5 import INV_TABLE, MUL_TABLE, ORDER, Perm, as_codes, decode, product_codes

SEED_ENV = "GPMATCH_SEED"
_ACCEPT = 240  # largest multiple of 120 that fits in a byte


class TapeExhausted(RuntimeError):
    pass


class OverlapError(ValueError):
    pass


class CoverageError(ValueError):
    pass


def parse_seed(text: str) -> bytes:
    text = text.strip()
    if len(text) != 64:
        raise ValueError("seed must be 64 hex characters")
    return bytes.fromhex(text)


class RandomTape:
    """A byte source consumed front to back: a finite file or a ChaCha20 keystream."""

    def __init__(self, data: Optional[bytes] = None, seed: Optional[bytes] = None):
        if (data is None) == (seed is None):
            raise ValueError("give exactly one of data or seed")
        self._data = bytearray(data) if data is not None else bytearray()
        self._finite = data is not None
        self._stream = None
        if seed is not None:
            if len(seed) != 32:
                raise ValueError("seed must be 32 bytes")
            # 16-byte nonce: 4-byte block counter (0) followed by a zero nonce
            cipher = Cipher(algorithms.ChaCha20(bytes(seed), bytes(16)), mode=None)
            self._stream = cipher.encryptor()
        self._start = 0  # absolute offset of self._data[0]
        self.cursor = 0

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RandomTape":
        return cls(data=Path(path).read_bytes())

    @classmethod
    def from_seed(cls, seed: Union[bytes, str]) -> "RandomTape":
        return cls(seed=parse_seed(seed) if isinstance(seed, str) else seed)

    @classmethod
    def from_env(cls) -> "RandomTape":
        value = os.environ.get(SEED_ENV)
        if not value:
            raise KeyError(f"{SEED_ENV} is not set")
        return cls.from_seed(value)

    @property
    def finite(self) -> bool:
        return self._finite

    def _ensure(self, end: int) -> bool:
        """Make absolute offsets below ``end`` available; False if the file ends first."""
        have = self._start + len(self._data)
        if end <= have:
            return True
        if self._stream is None:
            return False
        need = max(end - have, 1 << 16)
        self._data += self._stream.update(bytes(need))
        return True

    def _compact(self) -> None:
        if self._stream is not None and self.cursor - self._start > 1 << 22:
            drop = self.cursor - self._start
            del self._data[:drop]
            self._start += drop

    def read(self, count: int) -> bytes:
        if not self._ensure(self.cursor + count):
            raise TapeExhausted(f"tape has fewer than {count} bytes left")
        lo = self.cursor - self._start
        out = bytes(self._data[lo : lo + count])
        self.cursor += count
        self._compact()
        return out

    def remaining(self) -> Optional[int]:
        return self._start + len(self._data) - self.cursor if self._finite else None

    def draw(self, count: int) -> np.ndarray:
        """``count`` uniform element codes by the byte-rejection rule.

        Consumes exactly the bytes up to and including the last accepted one,
        so batch and one-at-a-time draws agree byte for byte.
        """
        out = np.empty(count, dtype=np.uint8)
        filled = 0
        while filled < count:
            want = count - filled
            guess = want + want // 12 + 64
            if not self._ensure(self.cursor + guess):
                guess = self._start + len(self._data) - self.cursor
                if guess <= 0:
                    raise TapeExhausted("tape exhausted while drawing blinders")
            lo = self.cursor - self._start
            raw = np.frombuffer(bytes(self._data[lo : lo + guess]), dtype=np.uint8)
            accepted = np.flatnonzero(raw < _ACCEPT)
            take = accepted[:want]
            out[filled : filled + len(take)] = raw[take] % ORDER
            filled += len(take)
            if len(take) == want:
                self.cursor += int(take[-1]) + 1 if len(take) else 0
            else:
                self.cursor += guess
                if self._finite and self.remaining() == 0 and filled < count:
                    raise TapeExhausted("tape exhausted while drawing blinders")
        self._compact()
        return out


def draw_uniform(tape: RandomTape) -> Perm:
    return decode(int(tape.draw(1)[0]))


@dataclass
class BlindedSeq:
    elems: np.ndarray
    # test-only metadata; never transmitted
    value_preserved_against: Optional[Perm] = None

    def __len__(self) -> int:
        return len(self.elems)

    @property
    def value(self) -> Perm:
        return decode(int(product_codes(self.elems)))


def apply_blinders(seq: np.ndarray, blinders: np.ndarray) -> np.ndarray:
    """Blind ``seq`` (..., L) with ``blinders`` (..., L-1); works on batches."""
    seq = np.asarray(seq, dtype=np.uint8)
    shape = seq.shape[:-1] + (1,)
    ident = np.zeros(shape, dtype=np.uint8)
    right = np.concatenate([blinders, ident], axis=-1)
    left = INV_TABLE[np.concatenate([ident, blinders], axis=-1)]
    return MUL_TABLE[MUL_TABLE[left, seq], right]


def blind(seq: Union[np.ndarray, Sequence], tape: RandomTape) -> BlindedSeq:
    codes = as_codes(seq)
    if len(codes) < 1:
        raise ValueError("cannot blind an empty sequence")
    blinders = tape.draw(len(codes) - 1)
    return BlindedSeq(apply_blinders(codes, blinders), decode(int(product_codes(codes))))


@dataclass
class PartialBlind:
    positions: np.ndarray
    elems: np.ndarray


def blind_partial(
    seq: Union[np.ndarray, Sequence], owned: Union[np.ndarray, Sequence[int]], tape: RandomTape
) -> PartialBlind:
    """Blind only the ``owned`` positions of the full session sequence.

    Entries of ``seq`` at unowned positions are ignored.  All blinders are
    drawn regardless, which keeps the two parties' tapes aligned.
    """
    codes = as_codes(seq)
    pos = np.unique(np.asarray(owned, dtype=np.int64))
    if len(pos) and (pos[0] < 0 or pos[-1] >= len(codes)):
        raise IndexError("owned position outside the sequence")
    blinders = tape.draw(len(codes) - 1) if len(codes) else np.empty(0, np.uint8)
    ext = np.concatenate([[0], blinders, [0]]).astype(np.uint8)
    elems = MUL_TABLE[MUL_TABLE[INV_TABLE[ext[pos]], codes[pos]], ext[pos + 1]]
    return PartialBlind(pos, elems)


def interleave(parts: Sequence[PartialBlind], length: int) -> np.ndarray:
    """Merge complementary partial blinds into the full sequence."""
    out = np.zeros(length, dtype=np.uint8)
    seen = np.zeros(length, dtype=bool)
    for part in parts:
        pos = np.asarray(part.positions, dtype=np.int64)
        if len(pos) and (pos.min() < 0 or pos.max() >= length):
            raise CoverageError("position outside the session sequence")
        if seen[pos].any() or len(np.unique(pos)) != len(pos):
            raise OverlapError("partial shares overlap")
        seen[pos] = True
        out[pos] = part.elems
    if not seen.all():
        raise CoverageError(f"{int((~seen).sum())} positions uncovered")
    return out


def simulate(output_value: Perm, length: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform first ``length-1`` elements, last one forced to give ``output_value``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    head = rng.integers(0, ORDER, size=length - 1, dtype=np.uint8)
    last = MUL_TABLE[INV_TABLE[product_codes(head)], output_value.code]
    return np.append(head, np.uint8(last))


def simulate_batch(output_value: Perm, length: int, count: int, rng: np.random.Generator) -> np.ndarray:
    head = rng.integers(0, ORDER, size=(count, length - 1), dtype=np.uint8)
    last = MUL_TABLE[INV_TABLE[product_codes(head)], output_value.code]
    return np.concatenate([head, last[:, None]], axis=1)

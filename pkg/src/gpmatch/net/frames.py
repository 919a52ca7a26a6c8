"""Length-prefixed binary frames.

Layout (all integers big-endian)::

    u32 payload length | u8 type | 16-byte session id | payload

The high bit of the type byte marks a SHARE chunk that has more chunks
following it.
"""
from __future__ import annotations

import asyncio
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

HEADER = struct.Struct(">IB16s")
HEADER_SIZE = HEADER.size  # 21
CONTINUED = 0x80
MAX_PAYLOAD = 1 << 28
SHARE_CHUNK = 1 << 20  # elements per SHARE frame


class MsgType(IntEnum):
    REGISTER_PUB = 1
    REGISTER_SUB = 2
    STRUCTURE = 3
    SHARE = 4
    PAYLOAD = 5
    RESULT = 6
    ERROR = 7


class FrameError(ValueError):
    pass


class Truncated(FrameError):
    pass


class BadMagicLength(FrameError):
    """Declared payload length is inconsistent with the bytes given."""


class UnknownType(FrameError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    session_id: bytes
    payload: bytes = b""
    continued: bool = False

    def __post_init__(self) -> None:
        if len(self.session_id) != 16:
            raise ValueError("session id must be 16 bytes")
        if self.continued and self.msg_type != MsgType.SHARE:
            raise UnknownType("only SHARE frames may be continued")


def _parse_type(raw: int) -> tuple[MsgType, bool]:
    continued = bool(raw & CONTINUED)
    try:
        kind = MsgType(raw & ~CONTINUED)
    except ValueError:
        raise UnknownType(f"unknown frame type {raw:#04x}") from None
    if continued and kind != MsgType.SHARE:
        raise UnknownType(f"continuation bit on {kind.name}")
    return kind, continued


def encode_frame(f: Frame) -> bytes:
    if len(f.payload) > MAX_PAYLOAD:
        raise BadMagicLength(f"payload of {len(f.payload)} bytes is too large")
    raw = int(f.msg_type) | (CONTINUED if f.continued else 0)
    return HEADER.pack(len(f.payload), raw, f.session_id) + f.payload


def parse_header(header: bytes) -> tuple[int, MsgType, bool, bytes]:
    if len(header) < HEADER_SIZE:
        raise Truncated(f"need {HEADER_SIZE} header bytes, got {len(header)}")
    length, raw, sid = HEADER.unpack(header[:HEADER_SIZE])
    if length > MAX_PAYLOAD:
        raise BadMagicLength(f"declared length {length} exceeds limit")
    kind, continued = _parse_type(raw)
    return length, kind, continued, sid


def decode_frame(data: bytes) -> Frame:
    length, kind, continued, sid = parse_header(data)
    body = data[HEADER_SIZE:]
    if len(body) < length:
        raise Truncated(f"payload declares {length} bytes, {len(body)} present")
    if len(body) > length:
        raise BadMagicLength(f"{len(body) - length} trailing bytes after payload")
    return Frame(kind, sid, bytes(body), continued)


# ------------------------------------------------------------------ payloads

_U32 = struct.Struct(">I")
_SUB = struct.Struct(">BI")
_STRUCT = struct.Struct(">BIIQ32s")
_RESULT = struct.Struct(">BBB")
SHARE_DTYPE = np.dtype([("pos", ">u8"), ("elem", "u1")])


def pack_register_pub(n: int, blob: bytes) -> bytes:
    return _U32.pack(n) + blob


def unpack_register_pub(payload: bytes) -> tuple[int, bytes]:
    if len(payload) < 4:
        raise Truncated("REGISTER_PUB needs 4 bytes")
    return _U32.unpack_from(payload)[0], payload[4:]


def pack_register_sub(variant: int, depth_bound: int) -> bytes:
    return _SUB.pack(variant, depth_bound)


def unpack_register_sub(payload: bytes) -> tuple[int, int]:
    if len(payload) != _SUB.size:
        raise Truncated("REGISTER_SUB is 5 bytes")
    return _SUB.unpack(payload)


def pack_structure(variant: int, n: int, depth_bound: int, total: int, digest: bytes) -> bytes:
    return _STRUCT.pack(variant, n, depth_bound, total, digest)


def unpack_structure(payload: bytes) -> tuple[int, int, int, int, bytes]:
    if len(payload) != _STRUCT.size:
        raise Truncated(f"STRUCTURE is {_STRUCT.size} bytes")
    return _STRUCT.unpack(payload)


def pack_share(positions: np.ndarray, elems: np.ndarray) -> bytes:
    rec = np.empty(len(positions), dtype=SHARE_DTYPE)
    rec["pos"], rec["elem"] = positions, elems
    return struct.pack(">Q", len(rec)) + rec.tobytes()


def unpack_share(payload: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(payload) < 8:
        raise Truncated("SHARE needs a count")
    (count,) = struct.unpack_from(">Q", payload)
    if len(payload) != 8 + count * SHARE_DTYPE.itemsize:
        raise BadMagicLength(f"SHARE count {count} disagrees with payload size")
    rec = np.frombuffer(payload, dtype=SHARE_DTYPE, offset=8)
    return rec["pos"].astype(np.int64), rec["elem"].copy()


def share_frames(session_id: bytes, positions: np.ndarray, elems: np.ndarray, chunk: int = SHARE_CHUNK) -> list[Frame]:
    frames = []
    starts = range(0, max(len(positions), 1), chunk)
    for i, lo in enumerate(starts):
        payload = pack_share(positions[lo : lo + chunk], elems[lo : lo + chunk])
        frames.append(Frame(MsgType.SHARE, session_id, payload, continued=i < len(starts) - 1))
    return frames


def pack_result(matched: int, value_code: int, flags: int) -> bytes:
    return _RESULT.pack(matched, value_code, flags)


def unpack_result(payload: bytes) -> tuple[int, int, int]:
    if len(payload) != _RESULT.size:
        raise Truncated("RESULT is 3 bytes")
    return _RESULT.unpack(payload)


# -------------------------------------------------------------------- I/O

def _recv_exact(sock: socket.socket, count: int) -> bytes:
    buf = bytearray()
    while len(buf) < count:
        chunk = sock.recv(min(count - len(buf), 1 << 20))
        if not chunk:
            raise Truncated(f"connection closed after {len(buf)} of {count} bytes")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Frame:
    length, kind, continued, sid = parse_header(_recv_exact(sock, HEADER_SIZE))
    return Frame(kind, sid, _recv_exact(sock, length), continued)


def write_frame(sock: socket.socket, f: Frame) -> None:
    sock.sendall(encode_frame(f))


async def read_frame_async(reader: asyncio.StreamReader) -> Frame:
    try:
        header = await reader.readexactly(HEADER_SIZE)
        length, kind, continued, sid = parse_header(header)
        payload = await reader.readexactly(length)
    except asyncio.IncompleteReadError as exc:
        raise Truncated("connection closed mid-frame") from exc
    return Frame(kind, sid, payload, continued)

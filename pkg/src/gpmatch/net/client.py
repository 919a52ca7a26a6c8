"""Blocking publisher and subscriber clients."""
from __future__ import annotations

import socket
from dataclasses import dataclass
from typing import Optional, Sequence

from .. import protocols as pr
from ..blinding import RandomTape
from ..circuit import Circuit
from ..s5 import decode
from . import frames as fr
from .frames import Frame, MsgType


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Delivery:
    result: pr.MatchResult
    payload: Optional[bytes]


def _connect(endpoint: tuple[str, int], timeout: float) -> socket.socket:
    sock = socket.create_connection(endpoint, timeout=timeout)
    sock.settimeout(timeout)
    return sock


def _expect(sock: socket.socket, *kinds: MsgType) -> Frame:
    frame = fr.read_frame(sock)
    if frame.msg_type == MsgType.ERROR:
        raise ProtocolError(frame.payload.decode("utf-8", "replace"))
    if frame.msg_type not in kinds:
        raise ProtocolError(f"expected {[k.name for k in kinds]}, got {frame.msg_type.name}")
    return frame


def _structure(frame: Frame) -> pr.SessionStructure:
    """Rebuild the announced structure locally and check it matches."""
    code, n, depth, total, digest = fr.unpack_structure(frame.payload)
    variant = {c: v for v, c in pr.VARIANT_CODES.items()}.get(code)
    if variant is None:
        raise ProtocolError(f"unknown variant code {code}")
    structure = pr.negotiate_structure(variant, n, depth)
    if structure.total_slots != total or structure.digest != digest:
        raise ProtocolError("announced structure differs from the local one")
    return structure


def _send_share(sock: socket.socket, share: pr.Share) -> None:
    for frame in fr.share_frames(share.session_id, share.positions, share.elems):
        fr.write_frame(sock, frame)


def _result(frame: Frame) -> pr.MatchResult:
    matched, code, flags = fr.unpack_result(frame.payload)
    return pr.MatchResult(matched, decode(code), flags)


def publish(
    endpoint: tuple[str, int],
    metadata: Sequence[int],
    payload: bytes,
    tape: RandomTape,
    session_id: bytes,
    timeout: float = 600.0,
) -> pr.MatchResult:
    with _connect(endpoint, timeout) as sock:
        body = fr.pack_register_pub(len(metadata), payload)
        fr.write_frame(sock, Frame(MsgType.REGISTER_PUB, session_id, body))
        structure = _structure(_expect(sock, MsgType.STRUCTURE))
        _send_share(sock, pr.publisher_share(structure, metadata, tape, session_id))
        return _result(_expect(sock, MsgType.RESULT))


def subscribe(
    endpoint: tuple[str, int],
    predicate: Circuit,
    tape: RandomTape,
    session_id: bytes,
    variant: str = pr.OFSGP,
    depth_bound: Optional[int] = None,
    timeout: float = 600.0,
) -> Delivery:
    depth = predicate.depth if depth_bound is None else depth_bound
    with _connect(endpoint, timeout) as sock:
        body = fr.pack_register_sub(pr.VARIANT_CODES[variant], depth)
        fr.write_frame(sock, Frame(MsgType.REGISTER_SUB, session_id, body))
        structure = _structure(_expect(sock, MsgType.STRUCTURE))
        _send_share(sock, pr.subscriber_share(structure, predicate, tape, session_id))
        frame = _expect(sock, MsgType.PAYLOAD, MsgType.RESULT)
        payload = None
        if frame.msg_type == MsgType.PAYLOAD:
            payload = frame.payload
            frame = _expect(sock, MsgType.RESULT)
        return Delivery(_result(frame), payload)

"""Asyncio broker service.

The broker sees session structures, blinded shares and the publisher's
opaque payload.  It never holds a tape, a seed, metadata or a predicate.
"""
from __future__ import annotations

import asyncio
import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import protocols as pr
from ..circuit import PUBLISHER, SUBSCRIBER
from . import frames as fr
from .frames import Frame, MsgType

DEFAULT_PORT = 7120
log = logging.getLogger(__name__)

_VARIANT_BY_CODE = {code: name for name, code in pr.VARIANT_CODES.items()}


class Phase(enum.IntEnum):
    NEGOTIATING = 0
    AWAITING_SHARES = 1
    MATCHED = 2
    CLOSED = 3


@dataclass
class SessionState:
    session_id: bytes
    phase: Phase = Phase.NEGOTIATING
    writers: dict = field(default_factory=dict)  # role -> StreamWriter
    n: Optional[int] = None
    payload: Optional[bytes] = None
    variant: Optional[str] = None
    depth_bound: Optional[int] = None
    structure: Optional[pr.SessionStructure] = None
    chunks: dict = field(default_factory=lambda: {PUBLISHER: [], SUBSCRIBER: []})
    complete: dict = field(default_factory=lambda: {PUBLISHER: False, SUBSCRIBER: False})
    result: Optional[pr.MatchResult] = None


class SessionViolation(Exception):
    pass


class Broker:
    def __init__(self) -> None:
        self.sessions: dict[bytes, SessionState] = {}
        self.forwarded = 0  # PAYLOAD frames sent, for tests and logs

    # ---------------------------------------------------------------- wiring
    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        role: Optional[str] = None
        sid: Optional[bytes] = None
        try:
            while True:
                try:
                    frame = await fr.read_frame_async(reader)
                except fr.Truncated:
                    break
                except fr.FrameError as exc:
                    await self._send(writer, Frame(MsgType.ERROR, sid or bytes(16), str(exc).encode()))
                    break
                sid = frame.session_id
                try:
                    role = await self._dispatch(frame, role, writer)
                except SessionViolation as exc:
                    await self._fail(frame.session_id, str(exc), writer)
        finally:
            writer.close()

    async def _send(self, writer: asyncio.StreamWriter, frame: Frame) -> None:
        if writer.is_closing():
            return
        writer.write(fr.encode_frame(frame))
        try:
            await writer.drain()
        except ConnectionError:
            pass

    async def _fail(self, sid: bytes, message: str, writer: asyncio.StreamWriter) -> None:
        log.info("session %s closed: %s", sid.hex(), message)
        error = Frame(MsgType.ERROR, sid, message.encode())
        state = self.sessions.pop(sid, None)
        targets = set(state.writers.values()) if state else set()
        targets.add(writer)
        if state:
            state.phase = Phase.CLOSED
        for w in targets:
            await self._send(w, error)

    # -------------------------------------------------------------- protocol
    async def _dispatch(self, frame: Frame, role: Optional[str], writer) -> Optional[str]:
        sid = frame.session_id
        kind = frame.msg_type
        if kind in (MsgType.REGISTER_PUB, MsgType.REGISTER_SUB):
            if role is not None:
                raise SessionViolation("connection already registered")
            role = PUBLISHER if kind == MsgType.REGISTER_PUB else SUBSCRIBER
            state = self.sessions.setdefault(sid, SessionState(sid))
            if state.phase != Phase.NEGOTIATING or role in state.writers:
                raise SessionViolation(f"duplicate registration for {role}")
            try:
                if role == PUBLISHER:
                    state.n, state.payload = fr.unpack_register_pub(frame.payload)
                else:
                    code, state.depth_bound = fr.unpack_register_sub(frame.payload)
                    state.variant = _VARIANT_BY_CODE.get(code)
                    if state.variant is None:
                        raise SessionViolation(f"unknown variant code {code}")
            except fr.FrameError as exc:
                raise SessionViolation(str(exc)) from exc
            state.writers[role] = writer
            if len(state.writers) == 2:
                await self._negotiate(state)
            return role
        if kind == MsgType.SHARE:
            state = self.sessions.get(sid)
            if state is None or role is None:
                raise SessionViolation("SHARE before registration")
            if state.phase != Phase.AWAITING_SHARES:
                raise SessionViolation("SHARE outside the share phase")
            if state.complete[role]:
                raise SessionViolation(f"duplicate SHARE from {role}")
            try:
                state.chunks[role].append(fr.unpack_share(frame.payload))
            except fr.FrameError as exc:
                raise SessionViolation(str(exc)) from exc
            if not frame.continued:
                state.complete[role] = True
                if all(state.complete.values()):
                    await self._match(state)
            return role
        raise SessionViolation(f"unexpected {kind.name} from client")

    async def _negotiate(self, state: SessionState) -> None:
        try:
            structure = await asyncio.to_thread(
                pr.negotiate_structure, state.variant, state.n, state.depth_bound
            )
        except pr.ProtocolError as exc:
            raise SessionViolation(str(exc)) from exc
        state.structure = structure
        state.phase = Phase.AWAITING_SHARES
        payload = fr.pack_structure(
            pr.VARIANT_CODES[state.variant], state.n, state.depth_bound,
            structure.total_slots, structure.digest,
        )
        for w in state.writers.values():
            await self._send(w, Frame(MsgType.STRUCTURE, state.session_id, payload))

    async def _match(self, state: SessionState) -> None:
        def share(role: str) -> pr.Share:
            parts = state.chunks[role]
            pos = np.concatenate([p for p, _ in parts])
            elems = np.concatenate([e for _, e in parts])
            return pr.Share(state.session_id, role, pos, elems)

        try:
            result = await asyncio.to_thread(
                pr.broker_match, state.structure, share(PUBLISHER), share(SUBSCRIBER)
            )
        except (pr.IncompleteShares, pr.PositionOverlap) as exc:
            raise SessionViolation(str(exc)) from exc
        state.result = result
        state.phase = Phase.MATCHED
        sid = state.session_id
        if result.matched:
            self.forwarded += 1
            await self._send(state.writers[SUBSCRIBER], Frame(MsgType.PAYLOAD, sid, state.payload or b""))
        body = fr.pack_result(result.matched, result.broker_value.code, result.flags)
        for role in (PUBLISHER, SUBSCRIBER):
            await self._send(state.writers[role], Frame(MsgType.RESULT, sid, body))
        state.phase = Phase.CLOSED
        self.sessions.pop(sid, None)


async def serve(host: str = "127.0.0.1", port: int = DEFAULT_PORT, broker: Optional[Broker] = None) -> None:
    broker = broker or Broker()
    server = await asyncio.start_server(broker.handle, host, port)
    log.info("broker listening on %s", ", ".join(str(s.getsockname()) for s in server.sockets))
    async with server:
        await server.serve_forever()


class BrokerThread:
    """Run a broker on a background event loop (tests, demos, ``simulate``)."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.broker = Broker()
        self._loop = asyncio.new_event_loop()
        self._ready = threading.Event()
        self._server: Optional[asyncio.base_events.Server] = None
        self._requested = port
        self.port = 0
        self._thread = threading.Thread(target=self._run, daemon=True)

    def _run(self) -> None:
        asyncio.set_event_loop(self._loop)
        self._server = self._loop.run_until_complete(
            asyncio.start_server(self.broker.handle, self.host, self._requested)
        )
        self.port = self._server.sockets[0].getsockname()[1]
        self._ready.set()
        self._loop.run_forever()

    def start(self) -> "BrokerThread":
        self._thread.start()
        self._ready.wait(10)
        return self

    def stop(self) -> None:
        async def shutdown() -> None:
            self._server.close()
            await self._server.wait_closed()

        if self._server is not None:
            asyncio.run_coroutine_threadsafe(shutdown(), self._loop).result(10)
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join(10)

    @property
    def endpoint(self) -> tuple[str, int]:
        return self.host, self.port

    def __enter__(self) -> "BrokerThread":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

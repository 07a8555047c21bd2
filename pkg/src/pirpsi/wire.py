"""Byte-exact encodings: message framing, query/answer payloads, library files.

Every integer on the wire is a 4-byte unsigned little-endian value.  A frame
is ``length (u32) | kind (u8) | payload`` where ``length`` counts payload
bytes only.  The query payload doubles as the canonical form used by the
privacy audit, so it must stay injective on well-formed queries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import MalformedFrameError, MalformedQueryError, UsageError
from .protocol import Answer, Library, Phase2Instance, Query

MAX_FRAME = 64 * 2**20
_HEADER = struct.Struct("<IB")
_U32 = np.dtype("<u4")

LIBRARY_MAGIC = b"PIRL"
LIBRARY_VERSION = 1
_LIB_HEADER = struct.Struct("<4sIIII")


class Kind(IntEnum):
    HELLO = 0
    QUERY = 1
    ANSWER = 2
    ERROR = 3


class ErrorCode(IntEnum):
    MALFORMED_FRAME = 1
    MALFORMED_QUERY = 2
    UNEXPECTED_KIND = 3
    INTERNAL = 4


@dataclass(frozen=True)
class WireMessage:
    kind: Kind
    payload: bytes = b""


def pack_frame(msg: WireMessage) -> bytes:
    if len(msg.payload) > MAX_FRAME:
        raise UsageError(f"payload of {len(msg.payload)} bytes exceeds {MAX_FRAME}")
    return _HEADER.pack(len(msg.payload), int(msg.kind)) + msg.payload


def parse_frame(data: bytes) -> tuple[WireMessage, bytes]:
    """Split one frame off ``data``; returns the message and the remainder."""
    if len(data) < _HEADER.size:
        raise MalformedFrameError("truncated frame header")
    length, kind = _HEADER.unpack_from(data)
    if length > MAX_FRAME:
        raise MalformedFrameError(f"frame of {length} bytes exceeds {MAX_FRAME}")
    end = _HEADER.size + length
    if len(data) < end:
        raise MalformedFrameError("truncated frame payload")
    try:
        kind = Kind(kind)
    except ValueError:
        raise MalformedFrameError(f"unknown message kind {kind}") from None
    return WireMessage(kind, bytes(data[_HEADER.size : end])), bytes(data[end:])


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise MalformedFrameError(f"connection closed after {len(buf)} of {n} bytes")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(stream: BinaryIO) -> WireMessage:
    header = _read_exact(stream, _HEADER.size)
    length, kind = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise MalformedFrameError(f"frame of {length} bytes exceeds {MAX_FRAME}")
    payload = _read_exact(stream, length)
    try:
        return WireMessage(Kind(kind), payload)
    except ValueError:
        raise MalformedFrameError(f"unknown message kind {kind}") from None


def _u32(values) -> bytes:
    arr = np.asarray(values, dtype=np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= 2**32):
        raise UsageError("value does not fit in an unsigned 32-bit field")
    return arr.astype(_U32).tobytes()


class _Reader:
    def __init__(self, payload: bytes, error=MalformedQueryError):
        self.buf = payload
        self.pos = 0
        self.error = error

    def take(self, count: int) -> np.ndarray:
        end = self.pos + 4 * count
        if count < 0 or end > len(self.buf):
            raise self.error("payload too short")
        out = np.frombuffer(self.buf, dtype=_U32, count=count, offset=self.pos)
        self.pos = end
        return out.astype(np.int64)

    def one(self) -> int:
        return int(self.take(1)[0])

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise self.error(f"{len(self.buf) - self.pos} trailing payload bytes")


# -- queries and answers ------------------------------------------------------


def encode_query(query: Query) -> bytes:
    K = len(query.phase1)
    c = len(query.phase1[0]) if K else 0
    P = len(query.phase2[0].coefficients) if query.phase2 else 0
    parts = [
        _u32([K, c, len(query.phase2), P, query.outer_n, query.outer_k]),
        _u32(query.phase1),
    ]
    for inst in query.phase2:
        parts.append(_u32(inst.coefficients))
        parts.append(_u32(inst.chunks))
    return b"".join(parts)


def decode_query(payload: bytes) -> Query:
    r = _Reader(payload)
    K, c, n_inst, P, outer_n, outer_k = (int(x) for x in r.take(6))
    if K * c * (1 + n_inst) + n_inst * P * K > len(payload):
        raise MalformedQueryError("declared sizes exceed the payload")

    def descriptors() -> tuple[tuple[int, ...], ...]:
        block = r.take(K * c).reshape(K, c)
        return tuple(tuple(int(x) for x in row) for row in block)

    phase1 = descriptors()
    instances = []
    for _ in range(n_inst):
        coeffs = r.take(P * K).reshape(P, K)
        instances.append(
            Phase2Instance(
                coefficients=tuple(tuple(int(x) for x in row) for row in coeffs),
                chunks=descriptors(),
            )
        )
    r.done()
    return Query(phase1, tuple(instances), outer_n, outer_k)


def encode_answer(answer: Answer) -> bytes:
    chunks = np.asarray(answer.coded_chunks)
    return _u32(chunks.shape) + _u32(chunks)


def decode_answer(payload: bytes) -> Answer:
    r = _Reader(payload, MalformedFrameError)
    count, c = r.one(), r.one()
    values = r.take(count * c).reshape(count, c)
    r.done()
    return Answer(values)


def encode_error(code: ErrorCode, message: str) -> bytes:
    return _u32([int(code)]) + message.encode("utf-8")


def decode_error(payload: bytes) -> tuple[int, str]:
    if len(payload) < 4:
        raise MalformedFrameError("truncated error payload")
    (code,) = struct.unpack_from("<I", payload)
    return code, payload[4:].decode("utf-8", errors="replace")


def encode_transcript(t) -> bytes:
    """Canonical bytes of a :class:`~pirpsi.protocol.Transcript`."""
    p = t.params
    parts = [
        b"PIRT",
        _u32([p.N, p.K, p.P, p.M, p.c, p.modulus]),
        struct.pack("<Q", t.seed % 2**64),
        _u32([len(t.request), *t.request]),
        _u32([len(t.side), *t.side]),
    ]
    for q, a in zip(t.queries, t.answers):
        qb, ab = encode_query(q), encode_answer(a)
        parts += [_u32([len(qb)]), qb, _u32([len(ab)]), ab]
    for i in t.request:
        parts.append(_u32(t.decoded[i]))
    parts.append(bytes([2 if t.success is None else int(t.success)]))
    return b"".join(parts)


# -- library files ------------------------------------------------------------


def write_library(path: str | Path, library: Library) -> None:
    header = _LIB_HEADER.pack(
        LIBRARY_MAGIC, LIBRARY_VERSION, library.modulus, library.K, library.L
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_u32(library.files))


def read_library(path: str | Path) -> Library:
    data = Path(path).read_bytes()
    if len(data) < _LIB_HEADER.size:
        raise UsageError(f"{path}: truncated library header")
    magic, version, q, K, L = _LIB_HEADER.unpack_from(data)
    if magic != LIBRARY_MAGIC:
        raise UsageError(f"{path}: bad magic {magic!r}")
    if version != LIBRARY_VERSION:
        raise UsageError(f"{path}: unsupported library version {version}")
    body = data[_LIB_HEADER.size :]
    if len(body) != 4 * K * L:
        raise UsageError(f"{path}: expected {K * L} symbols, found {len(body) // 4}")
    files = np.frombuffer(body, dtype=_U32).astype(np.int64).reshape(K, L)
    if files.size and files.max() >= q:
        raise UsageError(f"{path}: symbol not reduced modulo {q}")
    return Library(files, int(q))

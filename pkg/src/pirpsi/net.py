"""TCP deployment: stateless answer servers and a fetching client.

Each connection carries exactly one request frame and one reply frame.  A
server never keeps or logs query contents, so what one server learns stays
with that connection; that is the non-colluding setting the scheme assumes.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .errors import (
    MalformedFrameError,
    MalformedQueryError,
    NetworkError,
    RemoteError,
    UsageError,
)
from .protocol import (
    Answer,
    Library,
    Params,
    SideInfo,
    Transcript,
    _normalize_sets,
    answer_query,
    decode,
    generate_queries,
)
from .wire import (
    _HEADER,
    MAX_FRAME,
    ErrorCode,
    Kind,
    WireMessage,
    _u32,
    decode_answer,
    decode_error,
    decode_query,
    encode_answer,
    encode_error,
    encode_query,
    pack_frame,
    read_frame,
    read_library,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"address must look like host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


class _Handler(socketserver.StreamRequestHandler):
    server: AnswerServer

    def handle(self):
        try:
            header = self.rfile.read(_HEADER.size)
            if len(header) < _HEADER.size:
                return
            length, kind = _HEADER.unpack(header)
            if length > MAX_FRAME:
                log.info("closing connection: %d-byte frame exceeds limit", length)
                return
            payload = self.rfile.read(length)
            if len(payload) < length:
                return
        except OSError:
            return
        reply = self.server.respond(kind, payload)
        try:
            self.wfile.write(pack_frame(reply))
            self.wfile.flush()
        except OSError:
            pass


class AnswerServer(socketserver.ThreadingTCPServer):
    """Serves one read-only library; every request is answered independently."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, library: Library, address: tuple[str, int] = ("127.0.0.1", 0)):
        self.library = library
        super().__init__(address, _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def respond(self, kind: int, payload: bytes) -> WireMessage:
        lib = self.library
        try:
            kind = Kind(kind)
        except ValueError:
            return _error(ErrorCode.MALFORMED_FRAME, f"unknown message kind {kind}")
        if kind == Kind.HELLO:
            return WireMessage(Kind.HELLO, _u32([lib.modulus, lib.K, lib.L]))
        if kind != Kind.QUERY:
            return _error(ErrorCode.UNEXPECTED_KIND, f"servers accept HELLO or QUERY, not {kind.name}")
        try:
            query = decode_query(payload)
            answer = answer_query(lib, query)
        except MalformedQueryError as exc:
            return _error(ErrorCode.MALFORMED_QUERY, str(exc))
        except Exception:  # noqa: BLE001 - a bad request must never kill the server
            log.exception("internal error while answering")
            return _error(ErrorCode.INTERNAL, "internal error")
        return WireMessage(Kind.ANSWER, encode_answer(answer))


def _error(code: ErrorCode, message: str) -> WireMessage:
    return WireMessage(Kind.ERROR, encode_error(code, message))


def start_server(library: Library, address: tuple[str, int] = ("127.0.0.1", 0)) -> AnswerServer:
    """Start a server on a background thread; call ``shutdown()`` to stop it."""
    srv = AnswerServer(library, address)
    threading.Thread(target=srv.serve_forever, args=(0.05,), daemon=True).start()
    return srv


def serve(
    library_path: str,
    listen_address: str,
    params: Params | None = None,
    on_ready: Callable[[str], None] | None = None,
) -> None:
    """Load the library and serve until interrupted."""
    library = read_library(library_path)
    if params is not None and (library.K, library.L, library.modulus) != (
        params.K,
        params.L,
        params.modulus,
    ):
        raise UsageError(
            f"library (K={library.K}, L={library.L}, q={library.modulus}) does not match "
            f"parameters (K={params.K}, L={params.L}, q={params.modulus})"
        )
    with AnswerServer(library, parse_address(listen_address)) as srv:
        if on_ready:
            on_ready(srv.address)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass


# -- client -------------------------------------------------------------------

Transport = Callable[[int, str, bytes], WireMessage]


def tcp_transport(timeout: float = DEFAULT_TIMEOUT) -> Transport:
    def send(index: int, endpoint: str, frame: bytes) -> WireMessage:
        try:
            with socket.create_connection(parse_address(endpoint), timeout=timeout) as sock:
                sock.sendall(frame)
                with sock.makefile("rb") as stream:
                    return read_frame(stream)
        except (OSError, MalformedFrameError) as exc:
            raise NetworkError(
                f"server {index} at {endpoint}: {exc}", server=index, endpoint=endpoint
            ) from exc

    return send


def hello(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> tuple[int, int, int]:
    """Ask a server for its ``(q, K, L)``."""
    reply = tcp_transport(timeout)(0, endpoint, pack_frame(WireMessage(Kind.HELLO)))
    if reply.kind != Kind.HELLO or len(reply.payload) != 12:
        raise NetworkError(f"unexpected HELLO reply from {endpoint}", endpoint=endpoint)
    q, K, L = np.frombuffer(reply.payload, dtype="<u4").tolist()
    return q, K, L


def fetch(
    server_addresses: Sequence[str],
    params: Params,
    request,
    side: SideInfo,
    seed: int,
    *,
    reference: Library | None = None,
    transport: Transport | None = None,
) -> Transcript:
    """Query all servers concurrently, decode, and return the transcript.

    Server ``n`` receives only ``Q_n``.  ``reference`` (when given) is used
    solely to fill in the transcript's success flag.
    """
    if len(server_addresses) != params.N:
        raise UsageError(f"need {params.N} server addresses, got {len(server_addresses)}")
    req, side_idx = _normalize_sets(params, request, side)
    send = transport or tcp_transport()
    queries = generate_queries(params, req, side_idx, seed)
    frames = [pack_frame(WireMessage(Kind.QUERY, encode_query(q))) for q in queries]

    with ThreadPoolExecutor(max_workers=params.N) as pool:
        futures = [
            pool.submit(send, n, addr, frame)
            for n, (addr, frame) in enumerate(zip(server_addresses, frames))
        ]
        replies = [fut.result() for fut in futures]

    answers: list[Answer] = []
    for n, reply in enumerate(replies):
        if reply.kind == Kind.ERROR:
            code, message = decode_error(reply.payload)
            raise RemoteError(f"server {n} reported error {code}: {message}", n, code)
        if reply.kind != Kind.ANSWER:
            raise NetworkError(f"server {n} sent a {reply.kind.name} frame", server=n)
        try:
            answers.append(decode_answer(reply.payload))
        except MalformedFrameError as exc:
            raise NetworkError(f"server {n}: {exc}", server=n) from exc

    decoded = decode(params, queries, answers, req, side)
    success = None
    if reference is not None:
        success = all(np.array_equal(decoded[i], reference.files[i]) for i in req)
    return Transcript(params, req, side_idx, seed, queries, answers, decoded, success)

"""Worker side of the protocol: request handling and the TCP serve loop.

A worker owns one private shard and answers coordinator requests with
gradients, local solves, and penalized-loss scores.  Raw observations
never leave the worker; only parameter matrices, gradients, supports,
and scalars cross the channel.
"""

import logging
import socket
import struct

import numpy as np

from . import wire
from .model import design_matrix, get_family, gradient_given_design, loss_given_design, penalty
from .prox import local_solve
from .wire import CodecError, WireMessage, error_message

log = logging.getLogger(__name__)


class WorkerCore:
    """Protocol state machine over one shard, independent of any transport."""

    def __init__(self, data, family):
        if isinstance(family, str):
            family = get_family(family)
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("shard must be a non-empty 2-d array")
        family.validate(data)
        self.data = data
        self.family = family
        self.design = design_matrix(data)
        self.n = data.shape[0]
        self.p = data.shape[1]

    def _ack(self) -> WireMessage:
        return WireMessage("HelloAck", {"n": self.n, "p": self.p})

    def handle(self, msg: WireMessage) -> WireMessage:
        """Answer one request; protocol or compute errors become Error replies."""
        try:
            return self._dispatch(msg)
        except Exception as exc:
            log.warning("request %s failed: %s", msg.kind, exc)
            return error_message(wire.ERR_COMPUTE, f"{msg.kind} failed: {exc}")

    def _dispatch(self, msg: WireMessage) -> WireMessage:
        kind = msg.kind
        if kind == "Hello" or kind == "Shutdown":
            return self._ack()
        if kind == "SetConfig":
            if msg["family"] != self.family.name:
                return error_message(
                    wire.ERR_CONFIG,
                    f"worker holds {self.family.name} data, coordinator wants {msg['family']}")
            return self._ack()
        if kind == "GradRequest":
            grad = gradient_given_design(self.design, self.data, msg["beta"], self.family)
            return WireMessage("GradReply", {"grad": grad, "n": self.n})
        if kind == "SolveRequest":
            shift = (gradient_given_design(self.design, self.data, msg["beta"], self.family)
                     - msg["global_grad"])
            beta_k = local_solve(self.data, self.family, msg["support"], msg["beta"],
                                 shift, msg["lam"], msg["cfg"], design=self.design)
            return WireMessage("SolveReply", {"beta": beta_k})
        if kind == "ScoreRequest":
            value = self.n * (loss_given_design(self.design, self.data, msg["beta"], self.family)
                              + penalty(msg["beta"], msg["lam"]))
            return WireMessage("ScoreReply", {"value": value})
        return error_message(wire.ERR_UNEXPECTED, f"unexpected message kind {kind!r}")


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None once the peer closes the connection."""
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one complete frame from the socket, or None on clean close."""
    header = recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > wire.MAX_BODY:
        raise CodecError(wire.ERR_OVERSIZE, f"frame body of {length} bytes exceeds limit")
    if length < 2:
        raise CodecError(wire.ERR_MALFORMED, "frame body must hold version and kind")
    body = recv_exact(sock, length)
    if body is None:
        return None
    return header + body


def send_message(sock: socket.socket, msg: WireMessage) -> None:
    sock.sendall(wire.encode(msg))


def serve_connection(conn: socket.socket, core: WorkerCore) -> None:
    """Serve requests on one connection until Shutdown or disconnect."""
    while True:
        try:
            frame = read_frame(conn)
        except CodecError as exc:
            # Unrecoverable framing: answer and drop, the stream is desynced.
            log.warning("bad frame: %s", exc)
            send_message(conn, error_message(exc.code, str(exc)))
            return
        if frame is None:
            log.info("coordinator disconnected")
            return
        try:
            msg = wire.decode(frame)
        except CodecError as exc:
            log.warning("undecodable message: %s", exc)
            send_message(conn, error_message(exc.code, str(exc)))
            continue
        send_message(conn, core.handle(msg))
        if msg.kind == "Shutdown":
            log.info("shutdown requested")
            return


def serve_worker(data, family, host: str, port: int, on_listening=None) -> None:
    """Bind, accept one coordinator connection, serve it, and return.

    ``on_listening(host, port)`` is invoked with the bound address, which
    matters when ``port`` is 0 and the OS picks one.
    """
    core = WorkerCore(data, family)
    with socket.create_server((host, port)) as server:
        bound_host, bound_port = server.getsockname()[:2]
        if on_listening is not None:
            on_listening(bound_host, bound_port)
        conn, addr = server.accept()
        log.info("coordinator connected from %s", addr)
        with conn:
            serve_connection(conn, core)
